# ==============================================
# File: src/tools/corpus.py
# Description: Scan an on-disk IR corpus (root/<problem>/<snippet>.ll),
#              sample 1:1 clone/nonclone pairs and build problem-disjoint splits
# ==============================================
from __future__ import annotations
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple
import logging
import re

import numpy as np

from src.core.errors import EmptyCorpus, InsufficientPairs, InvalidSplit, OverlappingSplit, SeedError
from src.core.ir_parser import IrFunction, IrParser
from src.core.loss import PairLabel
from src.core.training import LabeledPair

logger = logging.getLogger(__name__)

IR_SUFFIX = ".ll"
ENUMERATE_LIMIT = 2_000_000


def natural_key(text: str) -> Tuple:
    return tuple(int(part) if part.isdigit() else part for part in re.split(r"(\d+)", text))


@dataclass(frozen=True)
class Snippet:
    problem: str
    snippet: str
    path: Path

    @property
    def key(self) -> str:
        return f"{self.problem}/{self.snippet}"


@dataclass(frozen=True)
class SkipEntry:
    path: Path
    reason: str


@dataclass
class CorpusIndex:
    root: Path
    problems: Dict[str, List[Snippet]] = field(default_factory=dict)
    skipped: List[SkipEntry] = field(default_factory=list)
    functions: Dict[str, List[IrFunction]] = field(default_factory=dict, compare=False, repr=False)

    @property
    def total(self) -> int:
        return sum(len(s) for s in self.problems.values())

    @property
    def problem_ids(self) -> List[str]:
        return list(self.problems)

    def snippets(self, problems: Optional[Iterable[str]] = None) -> List[Snippet]:
        wanted = self.problems if problems is None else sorted(problems, key=natural_key)
        return [s for pid in wanted for s in self.problems.get(pid, [])]


@dataclass(frozen=True)
class SplitSpec:
    """Problem ids per split. `test_groups` optionally partitions `test` into separately reported groups."""
    train: FrozenSet[str]
    val: FrozenSet[str]
    test: FrozenSet[str]
    test_groups: Tuple[FrozenSet[str], ...] = ()

    def __post_init__(self):
        if self.test_groups and frozenset().union(*self.test_groups) != self.test:
            raise InvalidSplit("test groups must cover exactly the test problems")

    def eval_groups(self) -> Dict[str, FrozenSet[str]]:
        """Named test groups; without a partition the whole test split is one group."""
        if len(self.test_groups) > 1:
            return {f"test{k}": ids for k, ids in enumerate(self.test_groups, start=1)}
        return {"test": self.test}

    def assert_disjoint(self) -> None:
        named = [("train", self.train), ("val", self.val), *self.eval_groups().items()]
        for (a, sa), (b, sb) in combinations(named, 2):
            shared = sa & sb
            if shared:
                raise OverlappingSplit(f"problem ids in both {a} and {b}: {sorted(shared, key=natural_key)}")

    def as_dict(self) -> Dict[str, List[str]]:
        named = {"train": self.train, "val": self.val, "test": self.test}
        if len(self.test_groups) > 1:
            named.update(self.eval_groups())
        return {name: sorted(ids, key=natural_key) for name, ids in named.items()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Sequence[str]]) -> "SplitSpec":
        groups = sorted((k for k in data if re.fullmatch(r"test\d+", k)), key=natural_key)
        return cls(frozenset(data.get("train", [])), frozenset(data.get("val", [])),
                   frozenset(data.get("test", [])), tuple(frozenset(data[k]) for k in groups))


# ---------------------------
# Scanning
# ---------------------------
def scan_corpus(root: Path, strict: bool = False) -> CorpusIndex:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    index = CorpusIndex(root=root)
    for problem_dir in sorted((p for p in root.iterdir() if p.is_dir()), key=lambda p: natural_key(p.name)):
        entries: List[Snippet] = []
        for path in sorted(problem_dir.glob(f"*{IR_SUFFIX}"), key=lambda p: natural_key(p.stem)):
            snippet = Snippet(problem_dir.name, path.stem, path)
            parser = IrParser(strict=strict)
            try:
                functions = parser.parse(path.read_text(encoding="utf-8"))
            except SeedError as exc:
                if strict:
                    raise
                index.skipped.append(SkipEntry(path, str(exc)))
                logger.warning("Skipping %s: %s", path, exc)
                continue
            if not functions:
                index.skipped.append(SkipEntry(path, "no functions"))
                logger.warning("Skipping %s: no functions", path)
                continue
            entries.append(snippet)
            index.functions[snippet.key] = functions
        if entries:
            index.problems[problem_dir.name] = entries
    if index.total == 0:
        raise EmptyCorpus(f"no parseable snippets under {root}")
    logger.info("Scanned %s: %d problems, %d snippets, %d skipped",
                root, len(index.problems), index.total, len(index.skipped))
    return index


# ---------------------------
# Pair sampling
# ---------------------------
def _canonical(a: Snippet, b: Snippet) -> Tuple[Snippet, Snippet]:
    return (a, b) if natural_key(a.key) <= natural_key(b.key) else (b, a)


def _make_pair(a: Snippet, b: Snippet) -> LabeledPair:
    a, b = _canonical(a, b)
    label = PairLabel.CLONE if a.problem == b.problem else PairLabel.NONCLONE
    return LabeledPair(a.key, b.key, label, a.problem, b.problem)


def _triangle_pair(k: int, m: int) -> Tuple[int, int]:
    """k-th (i, j) with i < j among m items, row-major."""
    i = 0
    while k >= m - 1 - i:
        k -= m - 1 - i
        i += 1
    return i, i + 1 + k


def _sample_clones(groups: List[List[Snippet]], count: int, rng: np.random.Generator) -> List[LabeledPair]:
    sizes = np.array([len(g) * (len(g) - 1) // 2 for g in groups], dtype=np.int64)
    offsets = np.cumsum(sizes)
    picks = np.sort(rng.choice(int(offsets[-1]), size=count, replace=False)) if count else []
    pairs = []
    for k in picks:
        g = int(np.searchsorted(offsets, k, side="right"))
        local = int(k - (offsets[g - 1] if g else 0))
        i, j = _triangle_pair(local, len(groups[g]))
        pairs.append(_make_pair(groups[g][i], groups[g][j]))
    return pairs


def _sample_nonclones(snippets: List[Snippet], count: int,
                      rng: np.random.Generator) -> List[LabeledPair]:
    n = len(snippets)
    if n * (n - 1) // 2 <= ENUMERATE_LIMIT:
        pool = [(i, j) for i, j in combinations(range(n), 2) if snippets[i].problem != snippets[j].problem]
        picks = np.sort(rng.choice(len(pool), size=count, replace=False)) if count else []
        return [_make_pair(snippets[pool[k][0]], snippets[pool[k][1]]) for k in picks]
    seen: set = set()
    pairs = []
    while len(pairs) < count:
        i, j = (int(x) for x in rng.integers(n, size=2))
        if snippets[i].problem == snippets[j].problem:
            continue
        key = (min(i, j), max(i, j))
        if key in seen:
            continue
        seen.add(key)
        pairs.append(_make_pair(snippets[key[0]], snippets[key[1]]))
    return pairs


def sample_pairs(index: CorpusIndex, problems: Iterable[str], n_pairs: int, seed: int = 0) -> List[LabeledPair]:
    """Draw up to `n_pairs` distinct unordered pairs, half clones and half nonclones (±1).

    Clone pairs come from within one problem, nonclone pairs are uniform over
    snippet pairs spanning two problems. The result order is shuffled.
    """
    groups = [index.problems[pid] for pid in sorted(set(problems), key=natural_key) if pid in index.problems]
    snippets = [s for g in groups for s in g]
    avail_clone = sum(len(g) * (len(g) - 1) // 2 for g in groups)
    total = len(snippets) * (len(snippets) - 1) // 2
    avail_non = total - avail_clone
    if avail_clone == 0 or avail_non == 0:
        raise InsufficientPairs(
            f"need clone and nonclone pairs, have {avail_clone} clone / {avail_non} nonclone "
            f"from {len(groups)} problem(s)")
    n_clone = min((n_pairs + 1) // 2, avail_clone, avail_non + 1)
    n_non = min(n_pairs - n_clone, avail_non, n_clone + 1)

    rng = np.random.default_rng(seed)
    pairs = _sample_clones(groups, n_clone, rng) + _sample_nonclones(snippets, n_non, rng)
    pairs = [pairs[i] for i in rng.permutation(len(pairs))]
    logger.info("Sampled %d pairs (%d clone, %d nonclone) from %d problems",
                len(pairs), n_clone, n_non, len(groups))
    return pairs


def write_pairs(path: Path, pairs: Sequence[LabeledPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(f"{p.key_a} {p.key_b} {PairLabel(p.label).value}\n")


def read_pairs(path: Path) -> List[LabeledPair]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                key_a, key_b, label = line.split()
                pairs.append(LabeledPair(key_a, key_b, PairLabel(label),
                                         key_a.split("/", 1)[0], key_b.split("/", 1)[0]))
            except ValueError as exc:
                raise SeedError(f"{path}:{line_no}: bad pair line ({exc})") from exc
    return pairs


# ---------------------------
# Splits
# ---------------------------
def parse_id_ranges(text: str) -> List[str]:
    """'1-15,20' -> ['1', ..., '15', '20']; non-numeric items are kept verbatim."""
    ids: List[str] = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        match = re.fullmatch(r"(\d+)\s*-\s*(\d+)", part)
        if match:
            lo, hi = int(match.group(1)), int(match.group(2))
            if lo > hi:
                raise InvalidSplit(f"empty id range '{part}'")
            ids.extend(str(k) for k in range(lo, hi + 1))
        else:
            ids.append(part)
    return ids


def parse_id_groups(text: str) -> List[List[str]]:
    """'26-40;41-55' -> one id list per `;`-separated group."""
    groups = [parse_id_ranges(part) for part in text.split(";") if part.strip()]
    if any(not g for g in groups):
        raise InvalidSplit(f"empty test group in '{text}'")
    return groups


def _resolve_ids(index: CorpusIndex, ids: Iterable[str], name: str) -> FrozenSet[str]:
    by_number = {int(pid): pid for pid in index.problems if pid.isdigit()}
    resolved = set()
    for raw in ids:
        pid = raw if raw in index.problems else by_number.get(int(raw)) if raw.isdigit() else None
        if pid is None:
            raise InvalidSplit(f"{name} split names unknown problem id '{raw}'")
        resolved.add(pid)
    if not resolved:
        raise InvalidSplit(f"{name} split is empty")
    return frozenset(resolved)


def make_splits(index: CorpusIndex, train: Optional[Sequence[str]] = None, val: Optional[Sequence[str]] = None,
                test: Optional[Sequence[str]] = None, test_groups: Optional[Sequence[Sequence[str]]] = None,
                ratios: Sequence[float] = (0.5, 0.25, 0.25), seed: int = 0) -> SplitSpec:
    """Explicit problem ids (ranges allowed) when `train` and `val` are given, else a seeded ratio split.

    With explicit ids and no `test`, the remaining problems form the test split.
    `test_groups` replaces `test` with several disjoint groups whose union is the test split.
    """
    if train is not None or val is not None:
        if train is None or val is None:
            raise InvalidSplit("explicit splits need both train and val ids")
        train_ids = _resolve_ids(index, train, "train")
        val_ids = _resolve_ids(index, val, "val")
        groups: Tuple[FrozenSet[str], ...] = ()
        if test_groups is not None:
            groups = tuple(_resolve_ids(index, ids, f"test{k}") for k, ids in enumerate(test_groups, start=1))
            test_ids = frozenset().union(*groups)
        elif test is not None:
            test_ids = _resolve_ids(index, test, "test")
        else:
            test_ids = frozenset(index.problems) - train_ids - val_ids
            if not test_ids:
                raise InvalidSplit("no problems left for the test split")
        spec = SplitSpec(train_ids, val_ids, test_ids, groups)
        spec.assert_disjoint()
        return spec

    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise InvalidSplit(f"split ratios must be three positive numbers, got {list(ratios)}")
    ids = index.problem_ids
    if len(ids) < 3:
        raise InvalidSplit(f"need at least 3 problems for a three-way split, have {len(ids)}")
    weights = np.asarray(ratios, dtype=np.float64) / float(np.sum(ratios))
    n_train = int(np.floor(len(ids) * weights[0] + 0.5))
    n_val = int(np.floor(len(ids) * weights[1] + 0.5))
    if n_train < 1 or n_val < 1 or n_train + n_val >= len(ids):
        raise InvalidSplit(f"ratios {list(ratios)} leave an empty split over {len(ids)} problems")
    order = [ids[i] for i in np.random.default_rng(seed).permutation(len(ids))]
    spec = SplitSpec(frozenset(order[:n_train]), frozenset(order[n_train:n_train + n_val]),
                     frozenset(order[n_train + n_val:]))
    logger.info("Split %d problems into %d/%d/%d", len(ids), len(spec.train), len(spec.val), len(spec.test))
    return spec
