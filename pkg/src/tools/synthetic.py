# ==============================================
# File: src/tools/synthetic.py
# Description: Small bundled corpus of template IR programs. Each problem is
#              one template solved by `@solve` and driven by an online-judge
#              style `@main`. Snippets of a problem are semantically equal but
#              differ in form: phis demoted to stack slots, split blocks,
#              equivalent arithmetic, swapped operands, statement order,
#              register / label names and small constant choices.
# ==============================================
from __future__ import annotations
from pathlib import Path
from typing import Dict, List, Sequence, Tuple
import logging
import re

import numpy as np

logger = logging.getLogger(__name__)

# Placeholders: {v:x} value/param, {l:x} block label, {c:a|b} constant picked per snippet.
_PLACEHOLDER_RE = re.compile(r"\{([vlc]):([^{}]+)\}")
_DEF_RE = re.compile(r"^\s*%\{v:([^{}]+)\}\s*=")
_USE_RE = re.compile(r"%\{v:([^{}]+)\}")
_ORDERED_WORDS = ("call", "load", "store")

_VAL = r"(%\{v:[^{}]+\}|-?\d+)"
_PHI_RE = re.compile(r"^\s*%\{v:([^{}]+)\} = phi (\S+) (.*)$")
_INCOMING_RE = re.compile(r"\[\s*([^,\]]+?)\s*,\s*%\{l:([^{}]+)\}\s*\]")
_PARAM_RE = re.compile(r"(\S+) %\{v:([^{}]+)\}")
_DEC_RE = re.compile(rf"= add (?:nuw )?(?:nsw )?i32 {_VAL}, (-?1)$")
_COMMUTATIVE_RE = re.compile(rf"= (add|mul|and|or|xor)((?: nuw| nsw)*) i32 {_VAL}, {_VAL}$")
_ICMP_RE = re.compile(rf"= icmp (\w+) i32 {_VAL}, {_VAL}$")
_SWAPPED_PREDICATES = {"eq": "eq", "ne": "ne", "slt": "sgt", "sgt": "slt", "sle": "sge", "sge": "sle",
                       "ult": "ugt", "ugt": "ult", "ule": "uge", "uge": "ule"}
# x > c  <=>  x >= c + 1, and so on
_SHIFTED_PREDICATES = {"sgt": ("sge", 1), "slt": ("sle", -1), "sge": ("sgt", -1), "sle": ("slt", 1)}

PRELUDE = (
    '@.str = private unnamed_addr constant [4 x i8] c"%d\\0A\\00", align 1\n'
    '@.str.1 = private unnamed_addr constant [3 x i8] c"%d\\00", align 1\n\n'
)
DECLARES = "\ndeclare i32 @printf(ptr, ...)\n\ndeclare i32 @__isoc99_scanf(ptr, ...)\n"

TEMPLATES: Dict[str, str] = {
    "sum_to_n": """
define i32 @solve(i32 %{v:n}) {
{l:entry}:
  br label %{l:head}
{l:head}:
  %{v:sum} = phi i32 [ 0, %{l:entry} ], [ %{v:next}, %{l:body} ]
  %{v:i} = phi i32 [ {c:1|0}, %{l:entry} ], [ %{v:inc}, %{l:body} ]
  %{v:cmp} = icmp sle i32 %{v:i}, %{v:n}
  br i1 %{v:cmp}, label %{l:body}, label %{l:exit}
{l:body}:
  %{v:next} = add nsw i32 %{v:sum}, %{v:i}
  %{v:inc} = add nsw i32 %{v:i}, 1
  br label %{l:head}
{l:exit}:
  ret i32 %{v:sum}
}
""",
    "factorial": """
define i32 @solve(i32 %{v:n}) {
{l:entry}:
  br label %{l:head}
{l:head}:
  %{v:acc} = phi i32 [ 1, %{l:entry} ], [ %{v:acc2}, %{l:body} ]
  %{v:i} = phi i32 [ %{v:n}, %{l:entry} ], [ %{v:dec}, %{l:body} ]
  %{v:cmp} = icmp sgt i32 %{v:i}, {c:1|0}
  br i1 %{v:cmp}, label %{l:body}, label %{l:exit}
{l:body}:
  %{v:acc2} = mul nsw i32 %{v:acc}, %{v:i}
  %{v:dec} = add nsw i32 %{v:i}, -1
  br label %{l:head}
{l:exit}:
  ret i32 %{v:acc}
}
""",
    "gcd": """
define i32 @solve(i32 %{v:a}, i32 %{v:b}) {
{l:entry}:
  br label %{l:head}
{l:head}:
  %{v:x} = phi i32 [ %{v:a}, %{l:entry} ], [ %{v:y}, %{l:body} ]
  %{v:y} = phi i32 [ %{v:b}, %{l:entry} ], [ %{v:r}, %{l:body} ]
  %{v:z} = icmp eq i32 %{v:y}, 0
  br i1 %{v:z}, label %{l:exit}, label %{l:body}
{l:body}:
  %{v:r} = srem i32 %{v:x}, %{v:y}
  br label %{l:head}
{l:exit}:
  %{v:p} = call i32 (ptr, ...) @printf(ptr @.str, i32 %{v:x})
  ret i32 %{v:x}
}
""",
    "fibonacci": """
define i32 @solve(i32 %{v:n}) {
{l:entry}:
  br label %{l:head}
{l:head}:
  %{v:a} = phi i32 [ 0, %{l:entry} ], [ %{v:b}, %{l:body} ]
  %{v:b} = phi i32 [ 1, %{l:entry} ], [ %{v:s}, %{l:body} ]
  %{v:i} = phi i32 [ 0, %{l:entry} ], [ %{v:i2}, %{l:body} ]
  %{v:c} = icmp slt i32 %{v:i}, %{v:n}
  br i1 %{v:c}, label %{l:body}, label %{l:exit}
{l:body}:
  %{v:s} = add nsw i32 %{v:a}, %{v:b}
  %{v:i2} = add nsw i32 %{v:i}, 1
  br label %{l:head}
{l:exit}:
  %{v:p} = call i32 (ptr, ...) @printf(ptr @.str, i32 %{v:a})
  ret i32 0
}
""",
    "power": """
define i32 @solve(i32 %{v:base}, i32 %{v:exp}) {
{l:entry}:
  %{v:pos} = icmp sgt i32 %{v:exp}, 0
  br i1 %{v:pos}, label %{l:body}, label %{l:exit}
{l:body}:
  %{v:acc} = phi i32 [ 1, %{l:entry} ], [ %{v:acc2}, %{l:body} ]
  %{v:k} = phi i32 [ 0, %{l:entry} ], [ %{v:k2}, %{l:body} ]
  %{v:acc2} = mul nsw i32 %{v:acc}, %{v:base}
  %{v:k2} = add nuw nsw i32 %{v:k}, 1
  %{v:done} = icmp eq i32 %{v:k2}, %{v:exp}
  br i1 %{v:done}, label %{l:exit}, label %{l:body}
{l:exit}:
  %{v:res} = phi i32 [ 1, %{l:entry} ], [ %{v:acc2}, %{l:body} ]
  ret i32 %{v:res}
}
""",
    "count_digits": """
define i32 @solve(i32 %{v:n}) {
{l:entry}:
  br label %{l:head}
{l:head}:
  %{v:x} = phi i32 [ %{v:n}, %{l:entry} ], [ %{v:q}, %{l:head} ]
  %{v:c} = phi i32 [ 0, %{l:entry} ], [ %{v:c2}, %{l:head} ]
  %{v:q} = sdiv i32 %{v:x}, 10
  %{v:c2} = add nsw i32 %{v:c}, 1
  %{v:more} = icmp {c:sgt|ne} i32 %{v:q}, 0
  br i1 %{v:more}, label %{l:head}, label %{l:exit}
{l:exit}:
  %{v:p} = call i32 (ptr, ...) @printf(ptr @.str, i32 %{v:c2})
  ret i32 %{v:c2}
}
""",
    "is_prime": """
define i32 @solve(i32 %{v:n}) {
{l:entry}:
  %{v:small} = icmp slt i32 %{v:n}, 2
  br i1 %{v:small}, label %{l:done}, label %{l:head}
{l:head}:
  %{v:d} = phi i32 [ 2, %{l:entry} ], [ %{v:d2}, %{l:next} ]
  %{v:sq} = mul nsw i32 %{v:d}, %{v:d}
  %{v:over} = icmp sgt i32 %{v:sq}, %{v:n}
  br i1 %{v:over}, label %{l:done}, label %{l:test}
{l:test}:
  %{v:r} = srem i32 %{v:n}, %{v:d}
  %{v:z} = icmp eq i32 %{v:r}, 0
  br i1 %{v:z}, label %{l:done}, label %{l:next}
{l:next}:
  %{v:d2} = add nsw i32 %{v:d}, 1
  br label %{l:head}
{l:done}:
  %{v:res} = phi i32 [ 0, %{l:entry} ], [ 1, %{l:head} ], [ 0, %{l:test} ]
  ret i32 %{v:res}
}
""",
    "array_max": """
define i32 @solve(ptr %{v:arr}, i32 %{v:len}) {
{l:entry}:
  %{v:first} = load i32, ptr %{v:arr}, align 4
  br label %{l:head}
{l:head}:
  %{v:best} = phi i32 [ %{v:first}, %{l:entry} ], [ %{v:best2}, %{l:body} ]
  %{v:i} = phi i32 [ 1, %{l:entry} ], [ %{v:i2}, %{l:body} ]
  %{v:c} = icmp slt i32 %{v:i}, %{v:len}
  br i1 %{v:c}, label %{l:body}, label %{l:exit}
{l:body}:
  %{v:idx} = sext i32 %{v:i} to i64
  %{v:ptr} = getelementptr inbounds i32, ptr %{v:arr}, i64 %{v:idx}
  %{v:val} = load i32, ptr %{v:ptr}, align 4
  %{v:gt} = icmp sgt i32 %{v:val}, %{v:best}
  %{v:best2} = select i1 %{v:gt}, i32 %{v:val}, i32 %{v:best}
  %{v:i2} = add nsw i32 %{v:i}, 1
  br label %{l:head}
{l:exit}:
  ret i32 %{v:best}
}
""",
}

_VALUE_PREFIXES = ("t", "v", "r", "tmp", "x")
_LABEL_PREFIXES = ("bb", "L", "blk", "lbl")

Block = Tuple[str, List[str]]

DEMOTE_PROB = 0.4
SPLIT_PROB = 0.5
REWRITE_PROB = 0.5


def _split_blocks(body: List[str]) -> List[Block]:
    blocks: List[Block] = []
    for line in body:
        if line.rstrip().endswith(":") and not line.startswith(" "):
            blocks.append((line, []))
        elif line.strip():
            blocks[-1][1].append(line)
    return blocks


def _label_name(header: str) -> str:
    return _PLACEHOLDER_RE.match(header.strip()[:-1]).group(2)


def _demote_phis(blocks: List[Block], rng: np.random.Generator) -> List[Block]:
    """Move a random subset of phis into stack slots (the shape of unoptimised code)."""
    index = {_label_name(label): k for k, (label, _) in enumerate(blocks)}
    out = [(label, list(stmts)) for label, stmts in blocks]
    slots: List[str] = []
    for label, stmts in blocks:
        for line in stmts:
            phi = _PHI_RE.match(line)
            if not phi or rng.random() >= DEMOTE_PROB:
                continue
            name, dtype, incoming = phi.groups()
            slot = f"{name}.addr"
            slots.append(f"  %{{v:{slot}}} = alloca {dtype}, align 4")
            for value, pred in _INCOMING_RE.findall(incoming):
                pred_stmts = out[index[pred]][1]
                pred_stmts.insert(len(pred_stmts) - 1, f"  store {dtype} {value}, ptr %{{v:{slot}}}, align 4")
            own = out[index[_label_name(label)]][1]
            at = own.index(line)
            own[at] = f"  %{{v:{name}}} = load {dtype}, ptr %{{v:{slot}}}, align 4"
            # loads go below the phis that stay
            load = own.pop(at)
            own.insert(sum(1 for l in own if " = phi " in l), load)
    if slots:
        out[0] = (out[0][0], slots + out[0][1])
    return out


def _split_block(blocks: List[Block], rng: np.random.Generator) -> List[Block]:
    """Cut one block in two, joined by an unconditional branch."""
    k = int(rng.integers(len(blocks)))
    label, stmts = blocks[k]
    phis = sum(1 for l in stmts if " = phi " in l)
    cut = int(rng.integers(phis, len(stmts)))
    name = _label_name(label)
    tail = f"{name}.split"
    head_stmts = stmts[:cut] + [f"  br label %{{l:{tail}}}"]
    moved = f"%{{l:{name}}} ]"
    out: List[Block] = []
    for j, (lab, body) in enumerate(blocks):
        if j == k:
            out.append((lab, head_stmts))
            out.append((f"{{l:{tail}}}:", stmts[cut:]))
            continue
        out.append((lab, body))
    # predecessors seen by phis are now the tail block
    return [(lab, [l.replace(moved, f"%{{l:{tail}}} ]") if " = phi " in l else l for l in body])
            for lab, body in out]


def _rewrite_arithmetic(line: str, rng: np.random.Generator) -> str:
    """Equivalent forms: x + -1 == x - 1, swapped icmp / commutative operands, shifted bounds."""
    dec = _DEC_RE.search(line)
    if dec and rng.random() < REWRITE_PROB:
        value, const = dec.groups()
        return line[:dec.start()] + f"= sub nsw i32 {value}, {-int(const)}"
    icmp = _ICMP_RE.search(line)
    if icmp:
        pred, lhs, rhs = icmp.groups()
        if pred in _SHIFTED_PREDICATES and re.fullmatch(r"-?\d+", rhs) and rng.random() < REWRITE_PROB:
            pred, delta = _SHIFTED_PREDICATES[pred]
            rhs = str(int(rhs) + delta)
        if pred in _SWAPPED_PREDICATES and rng.random() < REWRITE_PROB:
            pred, lhs, rhs = _SWAPPED_PREDICATES[pred], rhs, lhs
        return line[:icmp.start()] + f"= icmp {pred} i32 {lhs}, {rhs}"
    comm = _COMMUTATIVE_RE.search(line)
    if comm and rng.random() < REWRITE_PROB:
        op, flags, lhs, rhs = comm.groups()
        return line[:comm.start()] + f"= {op}{flags} i32 {rhs}, {lhs}"
    return line


def _shuffle_block(lines: List[str], rng: np.random.Generator) -> List[str]:
    """Random topological order of a block's body; phis stay on top, the terminator last."""
    phis = [l for l in lines[:-1] if " = phi " in l]
    rest = [l for l in lines[:-1] if " = phi " not in l]
    phis = [phis[i] for i in rng.permutation(len(phis))]
    defined = {m.group(1): k for k, l in enumerate(rest) if (m := _DEF_RE.match(l))}
    deps: List[set] = []
    last_effect = None
    for k, line in enumerate(rest):
        wanted = {defined[u] for u in _USE_RE.findall(line.split("=", 1)[-1]) if u in defined and defined[u] != k}
        if any(f" {w} " in f" {line} " for w in _ORDERED_WORDS):
            if last_effect is not None:
                wanted.add(last_effect)
            last_effect = k
        deps.append(wanted)
    order: List[int] = []
    placed: set = set()
    while len(order) < len(rest):
        ready = [k for k in range(len(rest)) if k not in placed and deps[k] <= placed]
        pick = ready[int(rng.integers(len(ready)))]
        order.append(pick)
        placed.add(pick)
    return phis + [rest[k] for k in order] + [lines[-1]]


def _rename(text: str, rng: np.random.Generator) -> str:
    value_names = sorted({m.group(2) for m in _PLACEHOLDER_RE.finditer(text) if m.group(1) == "v"})
    label_names = sorted({m.group(2) for m in _PLACEHOLDER_RE.finditer(text) if m.group(1) == "l"})
    vprefix = _VALUE_PREFIXES[int(rng.integers(len(_VALUE_PREFIXES)))]
    lprefix = _LABEL_PREFIXES[int(rng.integers(len(_LABEL_PREFIXES)))]
    vnums = rng.permutation(len(value_names)) + int(rng.integers(0, 50))
    lnums = rng.permutation(len(label_names)) + int(rng.integers(0, 50))
    mapping = {("v", n): f"{vprefix}{k}" for n, k in zip(value_names, vnums)}
    mapping.update({("l", n): f"{lprefix}{k}" for n, k in zip(label_names, lnums)})

    def substitute(match: re.Match) -> str:
        kind, name = match.group(1), match.group(2)
        if kind == "c":
            choices = name.split("|")
            return choices[int(rng.integers(len(choices)))]
        return mapping[(kind, name)]

    return _PLACEHOLDER_RE.sub(substitute, text)


def driver_template(solve_header: str) -> str:
    """`@main` that reads the arguments of `@solve` with scanf and prints its result."""
    params = _PARAM_RE.findall(solve_header[solve_header.index("(") + 1:solve_header.rindex(")")])
    lines = ["define i32 @main() {", "{l:m.entry}:"]
    args = []
    for k, (dtype, _) in enumerate(params):
        slot = f"%{{v:m.slot{k}}}"
        storage = "[16 x i32], align 16" if dtype == "ptr" else "i32, align 4"
        lines.append(f"  {slot} = alloca {storage}")
        lines.append(f"  %{{v:m.read{k}}} = call i32 (ptr, ...) @__isoc99_scanf(ptr @.str.1, ptr {slot})")
        if dtype == "ptr":
            args.append(f"ptr {slot}")
        else:
            lines.append(f"  %{{v:m.arg{k}}} = load i32, ptr {slot}, align 4")
            args.append(f"i32 %{{v:m.arg{k}}}")
    lines.append(f"  %{{v:m.res}} = call i32 @solve({', '.join(args)})")
    lines.append("  %{v:m.out} = call i32 (ptr, ...) @printf(ptr @.str, i32 %{v:m.res})")
    lines.extend(["  ret i32 0", "}"])
    return "\n".join(lines)


def _render_function(template: str, rng: np.random.Generator, transform: bool) -> List[str]:
    lines = template.strip("\n").splitlines()
    header, body, footer = lines[0], lines[1:-1], lines[-1]
    blocks = _split_blocks(body)
    if transform:
        blocks = _demote_phis(blocks, rng)
        if rng.random() < SPLIT_PROB:
            blocks = _split_block(blocks, rng)
        blocks = [(label, [_rewrite_arithmetic(l, rng) for l in stmts]) for label, stmts in blocks]
    entry, others = blocks[0], blocks[1:]
    others = [others[i] for i in rng.permutation(len(others))]
    out = [header]
    for label, stmts in [entry] + others:
        out.append(label)
        out.extend(_shuffle_block(stmts, rng))
    out.append(footer)
    return out


def render_variant(template: str, rng: np.random.Generator) -> str:
    """One snippet of a problem: `@solve` transformed and reordered, the driver reordered, all renamed."""
    solve = "\n".join(_render_function(template, rng, transform=True))
    driver = "\n".join(_render_function(driver_template(template.strip().splitlines()[0]), rng, transform=False))
    functions = [solve, driver] if rng.random() < 0.5 else [driver, solve]
    text = _rename("\n\n".join(functions), rng)
    return PRELUDE + text + "\n" + DECLARES


def write_synthetic_corpus(root: Path, problems: int = 8, variants: int = 8, seed: int = 0) -> List[Path]:
    """Write ``root/<problem>/<snippet>.ll`` for the first `problems` templates."""
    names = list(TEMPLATES)
    if not 1 <= problems <= len(names):
        raise ValueError(f"problems must be between 1 and {len(names)}")
    rng = np.random.default_rng(seed)
    root = Path(root)
    written: List[Path] = []
    for pid, name in enumerate(names[:problems], start=1):
        problem_dir = root / str(pid)
        problem_dir.mkdir(parents=True, exist_ok=True)
        for vid in range(1, variants + 1):
            path = problem_dir / f"{vid}.ll"
            path.write_text(f"; {name} variant {vid}\n" + render_variant(TEMPLATES[name], rng),
                            encoding="utf-8")
            written.append(path)
    logger.info("Wrote synthetic corpus: %d problems x %d variants under %s", problems, variants, root)
    return written


def template_names() -> Sequence[str]:
    return tuple(TEMPLATES)
