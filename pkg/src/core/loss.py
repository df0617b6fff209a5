# ==============================================
# File: src/core/loss.py
# Description: Pair labels and the margin loss on cosine similarity
# ==============================================
from __future__ import annotations
from enum import Enum


class PairLabel(str, Enum):
    CLONE = "clone"
    NONCLONE = "nonclone"

    @property
    def is_clone(self) -> bool:
        return self is PairLabel.CLONE


def pair_loss(s: float, label: PairLabel | str, margin: float) -> float:
    """Hinge on similarity: clones are pulled above `margin`, nonclones pushed below 1 - margin."""
    if PairLabel(label).is_clone:
        return max(0.0, margin - s)
    return max(0.0, s - (1.0 - margin))


def pair_loss_grad(s: float, label: PairLabel | str, margin: float) -> float:
    # the kink itself counts as the flat side
    if PairLabel(label).is_clone:
        return -1.0 if margin - s > 0.0 else 0.0
    return 1.0 if s - (1.0 - margin) > 0.0 else 0.0
