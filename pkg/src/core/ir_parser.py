# ==============================================
# File: src/core/ir_parser.py
# Description: Textual LLVM IR -> functions of basic blocks of instructions.
#              llvmlite parses and verifies the module; the supported subset
#              is mapped onto the small Instruction / Operand model below.
# ==============================================
from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple
import logging
import re

import llvmlite.binding as llvm

from src.core.errors import MalformedIr, UnsupportedInstruction

logger = logging.getLogger(__name__)


class InstructionKind(str, Enum):
    OPERATOR = "operator"
    API_CALL = "api_call"
    BRANCH = "branch"
    RETURN = "return"
    PHI = "phi"


class OperandKind(str, Enum):
    VALUE = "value_ref"
    CONSTANT = "constant"
    LABEL = "label_ref"
    INPUT = "input_ref"


@dataclass(frozen=True)
class Operand:
    """One instruction operand.

    `name` holds the value, label or parameter name for references and the
    literal token for constants. `dtype` is the operand's type.
    """
    variant: OperandKind
    name: str
    dtype: Optional[str] = None

    @classmethod
    def value_ref(cls, name: str, dtype: Optional[str] = None) -> "Operand":
        return cls(OperandKind.VALUE, name, dtype)

    @classmethod
    def constant(cls, literal: str, dtype: Optional[str] = None) -> "Operand":
        return cls(OperandKind.CONSTANT, literal, dtype)

    @classmethod
    def label_ref(cls, name: str) -> "Operand":
        return cls(OperandKind.LABEL, name, None)

    @classmethod
    def input_ref(cls, name: str, dtype: Optional[str] = None) -> "Operand":
        return cls(OperandKind.INPUT, name, dtype)


@dataclass(frozen=True)
class Instruction:
    kind: InstructionKind
    opcode: str
    result: Optional[str] = None
    operands: Tuple[Operand, ...] = ()
    dtype: Optional[str] = None

    @property
    def targets(self) -> List[str]:
        """Branch target labels (empty for non-branches)."""
        if self.kind != InstructionKind.BRANCH:
            return []
        return [op.name for op in self.operands if op.variant == OperandKind.LABEL]

    @property
    def is_terminator(self) -> bool:
        return self.kind in (InstructionKind.BRANCH, InstructionKind.RETURN)

    def value_dtype(self) -> Optional[str]:
        """Type of the SSA value this instruction defines."""
        if self.result is None:
            return None
        head = self.opcode.split(".", 1)[0]
        if head in ("icmp", "fcmp"):
            return "i1"
        if head in ("alloca", "getelementptr"):
            return "ptr"
        return self.dtype


@dataclass(frozen=True)
class BasicBlock:
    label: str
    instructions: Tuple[Instruction, ...]


@dataclass(frozen=True)
class IrFunction:
    name: str
    params: Tuple[Tuple[str, str], ...]
    blocks: Tuple[BasicBlock, ...]
    ret_type: str = "void"

    @property
    def instructions(self) -> List[Instruction]:
        return [ins for block in self.blocks for ins in block.instructions]


# ---------------------------
# Opcode tables
# ---------------------------
BINARY_OPS = {
    "add", "sub", "mul", "udiv", "sdiv", "urem", "srem",
    "fadd", "fsub", "fmul", "fdiv", "frem",
    "shl", "lshr", "ashr", "and", "or", "xor",
}
CONVERSION_OPS = {
    "trunc", "zext", "sext", "bitcast", "sitofp", "fptosi",
    "uitofp", "fptoui", "fpext", "fptrunc", "ptrtoint", "inttoptr",
}
MEMORY_OPS = {"alloca", "load", "store", "getelementptr"}
# terminators outside the subset; skipping one would leave its block open
FOREIGN_TERMINATORS = {"invoke", "resume", "indirectbr", "callbr", "catchswitch", "catchret", "cleanupret"}
FLAG_WORDS = {
    "inbounds", "nuw", "nusw", "inalloca", "samesign",
    "fast", "nnan", "ninf", "nsz", "arcp", "contract", "afn", "reassoc",
}
KEYWORD_CONSTANTS = {
    "constant_pointer_null": "null",
    "undef_value": "undef",
    "poison_value": "poison",
    "constant_aggregate_zero": "zeroinitializer",
    "constant_token_none": "none",
}
GLOBAL_KINDS = {"global_variable", "function", "global_alias", "global_ifunc"}

_NAME = r'(?:"[^"]*"|[-\w.$]+)'
_DEFINE_RE = re.compile(rf"^\s*define\b.*?@({_NAME})\s*\(")
_RESULT_RE = re.compile(rf"^\s*%({_NAME})\s*=")
_SLOT_RE = re.compile(r"%(\d+)\b")
_BLOCK_HEADER_RE = re.compile(rf"^\s*({_NAME}):")
_INCOMING_LABEL_RE = re.compile(rf",\s*%({_NAME})\s*\]")
_GLOBAL_REF_RE = re.compile(rf"@({_NAME})")
_ERROR_RE = re.compile(r":(\d+):\d+: error: ([^\n]*)")
_ATTR_CALL_RE = re.compile(r"\b[a-z_]+\([^()]*\)")
_TYPE_START_RE = re.compile(r"(?<![\w.])(?:void|i\d+|half|bfloat|float|double|fp128|x86_fp80|ppc_fp128|ptr|[{\[<%])")
_BARE_NAME_RE = re.compile(r"^[A-Za-z$._][-\w.$]*$")


def _unquote(name: str) -> str:
    return name[1:-1] if len(name) >= 2 and name[0] == name[-1] == '"' else name


def _kind(value: llvm.ValueRef) -> str:
    return value.value_kind.name


def _first_field(text: str) -> str:
    """Text up to the first comma outside brackets."""
    depth = 0
    for i, ch in enumerate(text):
        if ch in "([{<":
            depth += 1
        elif ch in ")]}>":
            depth -= 1
        elif ch == "," and depth == 0:
            return text[:i].strip()
    return text.strip()


def _after_opcode(inst: llvm.ValueRef, opcode: str) -> str:
    text = f" {str(inst).strip()}".split(f" {opcode} ", 1)[-1]
    words = text.split(None, 1)
    while len(words) > 1 and words[0] in FLAG_WORDS:
        text = words[1]
        words = text.split(None, 1)
    return text


def _local_name(value: llvm.ValueRef) -> str:
    """Name of an argument or instruction; the slot number when it has none."""
    if value.name:
        return value.name
    match = _SLOT_RE.search(str(value))
    if match is None:
        raise MalformedIr(f"cannot name value '{str(value).strip()}'")
    return match.group(1)


def _literal(value: llvm.ValueRef) -> str:
    text, dtype = str(value).strip(), str(value.type)
    if text.startswith(dtype + " "):
        return text[len(dtype):].strip()
    return text.split()[-1]


def _result_lines(source_text: str) -> Dict[Tuple[str, str], int]:
    """(function, result name) -> 1-based source line of the definition."""
    lines: Dict[Tuple[str, str], int] = {}
    current = ""
    for line_no, line in enumerate(source_text.splitlines(), start=1):
        define = _DEFINE_RE.match(line)
        if define:
            current = _unquote(define.group(1))
            lines[(current, "")] = line_no
            continue
        result = _RESULT_RE.match(line)
        if result:
            lines.setdefault((current, _unquote(result.group(1))), line_no)
    return lines


def _return_type(fn: llvm.ValueRef) -> str:
    header = next(l for l in str(fn).splitlines() if l.startswith("define"))
    prefix = header[: header.index(f"@{_fmt_name(fn.name)}(")]
    prefix = _ATTR_CALL_RE.sub("", prefix[len("define"):])
    start = _TYPE_START_RE.search(prefix)
    return prefix[start.start():].strip() if start else "void"


# ---------------------------
# Per-function context
# ---------------------------
@dataclass
class ParseContext:
    """Facts about the enclosing module and function that one instruction needs."""
    function: str = ""
    labels: Dict[str, str] = field(default_factory=dict)
    block_labels: List[str] = field(default_factory=list)
    string_globals: FrozenSet[str] = frozenset()
    lines: Dict[Tuple[str, str], int] = field(default_factory=dict)

    @classmethod
    def for_function(cls, fn: llvm.ValueRef, string_globals: FrozenSet[str] = frozenset(),
                     lines: Optional[Dict[Tuple[str, str], int]] = None) -> "ParseContext":
        ctx = cls(function=fn.name, string_globals=string_globals, lines=lines or {})
        blocks = list(fn.blocks)
        named = {block.name for block in blocks if block.name}
        for idx, block in enumerate(blocks):
            if block.name:
                ref = label = block.name
            elif idx == 0:
                # an unnamed entry block takes the slot after the unnamed arguments
                ref = str(sum(1 for arg in fn.arguments if not arg.name))
                label = "entry" if "entry" not in named else ref
            else:
                ref = label = ctx.block_ref(block)
            ctx.labels[ref] = label
            ctx.block_labels.append(label)
        return ctx

    @staticmethod
    def block_ref(block: llvm.ValueRef) -> str:
        if block.name:
            return block.name
        for line in str(block).splitlines():
            header = _BLOCK_HEADER_RE.match(line)
            if header:
                return _unquote(header.group(1))
            if line.strip():
                break
        raise MalformedIr("cannot name basic block")

    def label_of(self, ref: str) -> str:
        if ref not in self.labels:
            raise MalformedIr(f"reference to unknown block '%{ref}' in @{self.function}")
        return self.labels[ref]

    def global_token(self, name: str) -> str:
        name = _unquote(name)
        if name in self.string_globals or name.startswith(".str"):
            return "@str"
        return "@global"

    def line_of(self, result: Optional[str]) -> Optional[int]:
        if result is None:
            return None
        return self.lines.get((self.function, result))


# ---------------------------
# Operands
# ---------------------------
def _operand(value: llvm.ValueRef, ctx: ParseContext) -> Operand:
    kind = _kind(value)
    dtype = str(value.type)
    if kind == "argument":
        return Operand.input_ref(_local_name(value), dtype)
    if kind == "instruction":
        return Operand.value_ref(_local_name(value), dtype)
    if kind == "basic_block":
        return Operand.label_ref(ctx.label_of(ctx.block_ref(value)))
    if kind == "constant_int":
        literal = _literal(value)
        if dtype == "i1" and literal in ("true", "false"):
            literal = "1" if literal == "true" else "0"
        return Operand.constant(literal, dtype)
    if kind == "constant_fp":
        return Operand.constant(_literal(value), dtype)
    if kind in KEYWORD_CONSTANTS:
        return Operand.constant(KEYWORD_CONSTANTS[kind], dtype)
    if kind in GLOBAL_KINDS:
        return Operand.constant(ctx.global_token(value.name), dtype)
    if kind == "constant_expr":
        inner = _GLOBAL_REF_RE.search(str(value))
        return Operand.constant(ctx.global_token(inner.group(1)) if inner else "@global", dtype)
    raise UnsupportedInstruction(kind)


# ---------------------------
# Instructions
# ---------------------------
def parse_instruction(inst: llvm.ValueRef, ctx: Optional[ParseContext] = None) -> Optional[Instruction]:
    """Map one parsed instruction onto `Instruction`.

    Returns None for debug intrinsics. Raises UnsupportedInstruction for
    opcodes (or operand kinds) outside the supported subset and MalformedIr
    when a supported opcode breaks the model's shape rules.
    """
    ctx = ctx or ParseContext()
    opcode = inst.opcode
    result = None if str(inst.type) == "void" else _local_name(inst)
    line = ctx.line_of(result)
    try:
        ins = _convert(inst, opcode, result, ctx)
    except UnsupportedInstruction:
        raise UnsupportedInstruction(opcode, line) from None
    except MalformedIr as exc:
        raise MalformedIr(str(exc), line) from None
    if ins is not None:
        _check_shape(ins, line)
    return ins


def _convert(inst: llvm.ValueRef, opcode: str, result: Optional[str], ctx: ParseContext) -> Optional[Instruction]:
    operands = list(inst.operands)
    op = InstructionKind.OPERATOR
    rtype = str(inst.type)
    if opcode in BINARY_OPS or opcode == "fneg" or opcode in CONVERSION_OPS or opcode in ("select", "load"):
        return Instruction(op, opcode, result, tuple(_operand(v, ctx) for v in operands), rtype)
    if opcode in ("icmp", "fcmp"):
        pred = _after_opcode(inst, opcode).split(None, 1)[0]
        return Instruction(op, f"{opcode}.{pred}", result,
                           tuple(_operand(v, ctx) for v in operands), str(operands[0].type))
    if opcode == "alloca":
        size = [v for v in operands if not (_kind(v) == "constant_int" and _literal(v) == "1")]
        return Instruction(op, opcode, result, tuple(_operand(v, ctx) for v in size),
                           _first_field(_after_opcode(inst, opcode)))
    if opcode == "getelementptr":
        return Instruction(op, opcode, result, tuple(_operand(v, ctx) for v in operands),
                           _first_field(_after_opcode(inst, opcode)))
    if opcode == "store":
        return Instruction(op, opcode, None, tuple(_operand(v, ctx) for v in operands), str(operands[0].type))
    if opcode == "phi":
        labels = [_unquote(m) for m in _INCOMING_LABEL_RE.findall(str(inst))]
        if len(labels) != len(operands):
            raise MalformedIr("cannot match phi values to predecessor labels")
        pairs: List[Operand] = []
        for value, label in zip(operands, labels):
            pairs.extend((_operand(value, ctx), Operand.label_ref(ctx.label_of(label))))
        return Instruction(InstructionKind.PHI, opcode, result, tuple(pairs), rtype)
    if opcode == "call":
        return _convert_call(operands, result, rtype, ctx)
    if opcode == "br":
        if len(operands) == 3:
            # operand order is condition, false target, true target
            cond, if_false, if_true = operands
            return Instruction(InstructionKind.BRANCH, "br", None,
                               (_operand(cond, ctx), _operand(if_true, ctx), _operand(if_false, ctx)))
        return Instruction(InstructionKind.BRANCH, "br", None, tuple(_operand(v, ctx) for v in operands))
    if opcode == "switch":
        cond, default, cases = operands[0], operands[1], operands[2:]
        values = tuple(_operand(v, ctx) for v in cases[0::2])
        labels = tuple(_operand(v, ctx) for v in [default] + cases[1::2])
        return Instruction(InstructionKind.BRANCH, "switch", None,
                           (_operand(cond, ctx),) + values + labels, str(cond.type))
    if opcode == "ret":
        if not operands:
            return Instruction(InstructionKind.RETURN, "ret", None, (), "void")
        value = _operand(operands[0], ctx)
        return Instruction(InstructionKind.RETURN, "ret", None, (value,), value.dtype)
    if opcode == "unreachable":
        return Instruction(InstructionKind.RETURN, "unreachable", None, (), None)
    raise UnsupportedInstruction(opcode)


def _convert_call(operands: Sequence[llvm.ValueRef], result: Optional[str], rtype: str,
                  ctx: ParseContext) -> Optional[Instruction]:
    *args, callee = operands
    values: List[Operand] = []
    if _kind(callee) == "function":
        name = callee.name
        if name.startswith("llvm.dbg."):
            return None
    elif _kind(callee) in ("argument", "instruction"):
        name = "indirect_call"
        values.append(_operand(callee, ctx))
    else:
        raise UnsupportedInstruction(_kind(callee))
    values.extend(_operand(a, ctx) for a in args if _kind(a) != "metadata_as_value")
    return Instruction(InstructionKind.API_CALL, name, result, tuple(values), rtype)


def _check_shape(ins: Instruction, line: Optional[int]) -> None:
    if ins.kind == InstructionKind.OPERATOR and not ins.operands and ins.opcode != "alloca":
        raise MalformedIr(f"'{ins.opcode}' without operands", line)
    if ins.kind == InstructionKind.PHI and len(ins.operands) < 4:
        raise MalformedIr("phi needs at least two incoming (value, label) pairs", line)


# ---------------------------
# Module parsing
# ---------------------------
@dataclass
class SkippedLine:
    line: Optional[int]
    opcode: str


def _parse_assembly(source_text: str) -> llvm.ModuleRef:
    try:
        module = llvm.parse_assembly(source_text)
        module.verify()
    except RuntimeError as exc:
        message = str(exc)
        located = _ERROR_RE.search(message)
        if located:
            raise MalformedIr(located.group(2), int(located.group(1))) from None
        raise MalformedIr(" ".join(message.split())) from None
    return module


def _string_globals(module: llvm.ModuleRef) -> FrozenSet[str]:
    return frozenset(gv.name for gv in module.global_variables if 'c"' in str(gv))


class IrParser:
    """Turns module text into `IrFunction`s.

    In lenient mode (the default) unsupported instructions are skipped and
    recorded in `skipped`; in strict mode they raise.
    """

    def __init__(self, strict: bool = False):
        self.strict = strict
        self.skipped: List[SkippedLine] = []

    def parse(self, source_text: str) -> List[IrFunction]:
        self.skipped = []
        module = _parse_assembly(source_text)
        strings = _string_globals(module)
        lines = _result_lines(source_text)
        functions = [
            self._convert_function(fn, ParseContext.for_function(fn, strings, lines))
            for fn in module.functions if not fn.is_declaration
        ]
        logger.debug("Parsed %d function(s), skipped %d instruction(s)", len(functions), len(self.skipped))
        return functions

    def _convert_function(self, fn: llvm.ValueRef, ctx: ParseContext) -> IrFunction:
        params = tuple((_local_name(arg), str(arg.type)) for arg in fn.arguments)
        blocks = tuple(
            BasicBlock(label, tuple(self._convert_block(block, ctx)))
            for block, label in zip(fn.blocks, ctx.block_labels)
        )
        return IrFunction(name=fn.name, params=params, blocks=blocks, ret_type=_return_type(fn))

    def _convert_block(self, block: llvm.ValueRef, ctx: ParseContext) -> Iterable[Instruction]:
        for inst in block.instructions:
            try:
                ins = parse_instruction(inst, ctx)
            except UnsupportedInstruction as exc:
                if self.strict or exc.opcode in FOREIGN_TERMINATORS:
                    raise
                logger.debug("Skipping unsupported '%s' in @%s", exc.opcode, ctx.function)
                self.skipped.append(SkippedLine(exc.line, exc.opcode))
                continue
            if ins is not None:
                yield ins


def parse_module(source_text: str, strict: bool = False) -> List[IrFunction]:
    return IrParser(strict=strict).parse(source_text)


# ---------------------------
# Pretty printing
# ---------------------------
def _fmt_name(name: str) -> str:
    return name if _BARE_NAME_RE.match(name) else f'"{name}"'


def _fmt_value(op: Operand) -> str:
    if op.variant == OperandKind.CONSTANT:
        if op.name in ("@str", "@global"):
            return f"@.{op.name[1:]}"
        return op.name
    if op.variant == OperandKind.LABEL:
        return f"label %{_fmt_name(op.name)}"
    return f"%{_fmt_name(op.name)}"


def _fmt_typed(op: Operand) -> str:
    return f"{op.dtype or 'ptr'} {_fmt_value(op)}"


def format_instruction(ins: Instruction, declared: FrozenSet[str] = frozenset()) -> str:
    prefix = f"%{_fmt_name(ins.result)} = " if ins.result is not None else ""
    ops = ins.operands
    head = ins.opcode.split(".", 1)[0]
    if ins.kind == InstructionKind.API_CALL:
        args = list(ops)
        if ins.opcode == "indirect_call":
            callee, args = _fmt_value(ops[0]), args[1:]
        elif ins.opcode in declared:
            callee = f"(...) @{_fmt_name(ins.opcode)}"
        else:
            callee = f"@{_fmt_name(ins.opcode)}"
        return f"{prefix}call {ins.dtype} {callee}({', '.join(_fmt_typed(a) for a in args)})"
    if ins.kind == InstructionKind.PHI:
        pairs = [f"[ {_fmt_value(ops[k])}, %{_fmt_name(ops[k + 1].name)} ]" for k in range(0, len(ops), 2)]
        return f"{prefix}phi {ins.dtype} {', '.join(pairs)}"
    if ins.kind == InstructionKind.RETURN:
        if ins.opcode == "unreachable":
            return "unreachable"
        return f"ret {_fmt_typed(ops[0])}" if ops else "ret void"
    if ins.kind == InstructionKind.BRANCH:
        labels = [op for op in ops if op.variant == OperandKind.LABEL]
        values = [op for op in ops if op.variant != OperandKind.LABEL]
        if ins.opcode == "switch":
            cond, cases = values[0], values[1:]
            body = " ".join(f"{_fmt_typed(c)}, {_fmt_value(l)}" for c, l in zip(cases, labels[1:]))
            return f"switch {_fmt_typed(cond)}, {_fmt_value(labels[0])} [ {body} ]"
        if values:
            return f"br {_fmt_typed(values[0])}, {_fmt_value(labels[0])}, {_fmt_value(labels[1])}"
        return f"br {_fmt_value(labels[0])}"
    if head in ("icmp", "fcmp"):
        pred = ins.opcode.split(".", 1)[1]
        return f"{prefix}{head} {pred} {ins.dtype} {', '.join(_fmt_value(o) for o in ops)}"
    if ins.opcode in BINARY_OPS or ins.opcode == "fneg":
        return f"{prefix}{ins.opcode} {ins.dtype} {', '.join(_fmt_value(o) for o in ops)}"
    if ins.opcode in CONVERSION_OPS:
        return f"{prefix}{ins.opcode} {_fmt_typed(ops[0])} to {ins.dtype}"
    if ins.opcode == "store":
        return f"store {_fmt_typed(ops[0])}, {_fmt_typed(ops[1])}"
    if ins.opcode in ("alloca", "load", "getelementptr"):
        return f"{prefix}{ins.opcode} {', '.join([ins.dtype] + [_fmt_typed(o) for o in ops])}"
    return f"{prefix}{ins.opcode} {', '.join(_fmt_typed(o) for o in ops)}"


def format_function(fn: IrFunction, declared: FrozenSet[str] = frozenset()) -> str:
    params = ", ".join(f"{dtype} %{_fmt_name(name)}" for name, dtype in fn.params)
    out = [f"define {fn.ret_type} @{_fmt_name(fn.name)}({params}) {{"]
    for idx, block in enumerate(fn.blocks):
        if idx:
            out.append("")
        out.append(f"{_fmt_name(block.label)}:")
        out.extend(f"  {format_instruction(ins, declared)}" for ins in block.instructions)
    out.append("}")
    return "\n".join(out)


def _preamble(functions: Sequence[IrFunction]) -> Tuple[List[str], FrozenSet[str]]:
    """Global placeholders and declarations the printed functions refer to."""
    defined = {fn.name for fn in functions}
    callees: Dict[str, str] = {}
    constants = set()
    for ins in (i for fn in functions for i in fn.instructions):
        if ins.kind == InstructionKind.API_CALL and ins.opcode != "indirect_call" and ins.opcode not in defined:
            callees.setdefault(ins.opcode, ins.dtype or "void")
        constants.update(op.name for op in ins.operands if op.variant == OperandKind.CONSTANT)
    lines = []
    if "@str" in constants:
        lines.append('@.str = private constant [1 x i8] c"\\00"')
    if "@global" in constants:
        lines.append("@.global = global i8 0")
    lines.extend(f"declare {ret} @{_fmt_name(name)}(...)" for name, ret in callees.items())
    return lines, frozenset(callees)


def format_module(functions: Sequence[IrFunction]) -> str:
    """Printable module text that parses back to the same functions."""
    if not functions:
        return ""
    preamble, declared = _preamble(functions)
    body = "\n\n".join(format_function(fn, declared) for fn in functions)
    return body + "\n" + ("\n" + "\n".join(preamble) + "\n" if preamble else "")
