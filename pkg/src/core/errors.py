# ==============================================
# File: src/core/errors.py
# Description: Exception hierarchy shared by the pipeline
# ==============================================
from __future__ import annotations
from typing import Optional


class SeedError(Exception):
    """Base class for every user-facing failure (CLI exit code 1)."""


class MalformedIr(SeedError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class UnsupportedInstruction(SeedError):
    def __init__(self, opcode: str, line: Optional[int] = None):
        self.opcode = opcode
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}unsupported instruction '{opcode}'")


class EmptyGraph(SeedError):
    pass


class DegenerateData(SeedError):
    pass


class EmptyCorpus(SeedError):
    pass


class InsufficientPairs(SeedError):
    pass


class OverlappingSplit(SeedError):
    pass


class InvalidSplit(SeedError):
    pass


class CheckpointError(SeedError):
    pass


class ConfigError(SeedError):
    pass
