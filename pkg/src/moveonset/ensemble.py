"""Product-rule probability fusion with the 0.5^n decision boundary."""

from __future__ import annotations

from dataclasses import dataclass

REST = "rest"
MOVEMENT = "movement"

# configurations evaluated in the study: member kinds per method name
METHOD_MEMBERS = {
    "D": ("D",),
    "S": ("S",),
    "M": ("M",),
    "E": ("E",),
    "SM": ("S", "M"),
    "SE": ("S", "E"),
    "ME": ("M", "E"),
    "SME": ("S", "M", "E"),
}

_CLAMP = 1e-9


class EnsembleError(Exception):
    pass


@dataclass(frozen=True)
class FusedScore:
    value: float
    member_probs: tuple[float, ...]

    @property
    def n(self) -> int:
        return len(self.member_probs)


def fuse(probs) -> FusedScore:
    probs = tuple(float(p) for p in probs)
    if not probs:
        raise EnsembleError("empty probability list")
    for p in probs:
        if not (0.0 <= p <= 1.0):
            raise EnsembleError(f"probability {p} out of [0, 1]")
    value = 1.0
    for p in probs:
        value *= min(max(p, _CLAMP), 1.0 - _CLAMP)
    return FusedScore(value=value, member_probs=probs)


def decide(score: FusedScore, n: int) -> str:
    if n != score.n:
        raise EnsembleError(f"n={n} does not match {score.n} member probabilities")
    # tie at the boundary resolves to rest: an early false trigger is the
    # costlier error in the target application
    return MOVEMENT if score.value > 0.5 ** n else REST
