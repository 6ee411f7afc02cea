"""Entropy-based uncertainty for merged ensemble detections.

For a merged object whose cluster holds detections from d of the T ensemble
models, the class scores are fused into per-class probabilities p_c and the
uncertainty is the sum of the binary entropies of those probabilities::

    H* = -sum_c [ p_c log p_c + (1 - p_c) log(1 - p_c) ]

with 0 log 0 taken as 0. Each class contributes an independent am-I-present
bit, so a crisp ensemble (every p_c near 0 or one near 1) scores near zero
while disagreement pushes the sum up. Missing votes then raise the stake: the
penalized uncertainty is

    H = H* * (1 + f_p * (T - d))

so an object seen by fewer models is treated as less trustworthy even when
the voters that did fire agree. A warning is raised when H exceeds the
threshold theta_w strictly.

Fusion policy decides the denominator of the probability average: "zero-fill"
divides the per-class sums by T, counting silent models as zero-probability
votes (the default); "contributing-only" divides by d, scoring only the
models that fired and leaving the miss penalty to the f_p term alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

from .errors import InvariantViolation
from .merge import MergedObject
from .types import BoundingBox

FUSION_POLICIES = ("zero-fill", "contributing-only")
LOG_BASES = ("2", "e")


@dataclass(frozen=True, slots=True)
class EntropyConfig:
    """Ensemble geometry and warning threshold.

    log_base is kept as the string "2" or "e" so config dumps stay exact.
    """

    class_count: int = 11
    ensemble_size: int = 5
    penalty: float = 0.1
    theta_w: float = 1.0
    log_base: str = "2"
    policy: str = "zero-fill"

    def __post_init__(self) -> None:
        if self.class_count < 1:
            raise InvariantViolation(f"class_count must be >= 1, got {self.class_count}")
        if self.ensemble_size < 1:
            raise InvariantViolation(f"ensemble_size must be >= 1, got {self.ensemble_size}")
        if not (math.isfinite(self.penalty) and self.penalty >= 0.0):
            raise InvariantViolation(f"penalty must be finite and >= 0, got {self.penalty}")
        if not (math.isfinite(self.theta_w) and self.theta_w >= 0.0):
            raise InvariantViolation(f"theta_w must be finite and >= 0, got {self.theta_w}")
        if self.log_base not in LOG_BASES:
            raise InvariantViolation(f"log_base must be one of {LOG_BASES}, got {self.log_base!r}")
        if self.policy not in FUSION_POLICIES:
            raise InvariantViolation(f"policy must be one of {FUSION_POLICIES}, got {self.policy!r}")

    def to_header(self) -> dict[str, Any]:
        """The config block stamped into every entropy output."""
        return {
            "T": self.ensemble_size,
            "C": self.class_count,
            "f_p": self.penalty,
            "theta_w": self.theta_w,
            "log_base": self.log_base,
            "policy": self.policy,
        }

    @classmethod
    def from_header(cls, header: dict[str, Any]) -> "EntropyConfig":
        try:
            return cls(
                class_count=header["C"],
                ensemble_size=header["T"],
                penalty=header["f_p"],
                theta_w=header["theta_w"],
                log_base=header["log_base"],
                policy=header["policy"],
            )
        except KeyError as exc:
            raise InvariantViolation(f"entropy header missing key {exc}")


@dataclass(frozen=True, slots=True)
class QuantifiedObject:
    """A merged object with fused probabilities and its uncertainty scores."""

    box: BoundingBox
    label: int
    fused_probs: tuple[float, ...]
    d: int
    h_star: float
    h: float
    warned: bool


def _summed_probs(merged: MergedObject, count: int) -> Sequence[float]:
    members = merged.members
    first = members[0].class_probs
    if len(first) != count:
        raise InvariantViolation(
            f"detection has {len(first)} class probs, config says {count}"
        )
    if len(members) == 1:
        return first
    sums = list(first)
    for det in members[1:]:
        probs = det.class_probs
        if len(probs) != count:
            raise InvariantViolation(
                f"detection has {len(probs)} class probs, config says {count}"
            )
        sums = [a + b for a, b in zip(sums, probs)]
    return sums


def fuse_probabilities(merged: MergedObject, config: EntropyConfig) -> tuple[float, ...]:
    """Average the members' class probability vectors into one.

    Member probabilities are each in [0, 1] and the denominator is at least
    the member count, so sums can only cross the denominator through float
    round-off; the clamp keeps the result a probability regardless.
    """
    sums = _summed_probs(merged, config.class_count)
    if config.policy == "zero-fill":
        denom = config.ensemble_size
    else:
        denom = len(merged.members)
    return tuple(s / denom if s < denom else 1.0 for s in sums)


def binary_entropy(p: float, log_base: str = "2") -> float:
    """h(p) = -p log p - (1-p) log(1-p), with 0 log 0 = 0."""
    if not 0.0 <= p <= 1.0:
        raise InvariantViolation(f"probability {p} outside [0, 1]")
    if p == 0.0 or p == 1.0:
        return 0.0
    q = 1.0 - p
    if log_base == "2":
        return -(p * math.log2(p) + q * math.log2(q))
    return -(p * math.log(p) + q * math.log(q))


def entropy_h_star(fused_probs: Sequence[float], log_base: str = "2") -> float:
    """Sum of per-class binary entropies of the fused probabilities."""
    log = math.log2 if log_base == "2" else math.log
    total = 0.0
    for p in fused_probs:
        if 0.0 < p < 1.0:
            q = 1.0 - p
            total -= p * log(p) + q * log(q)
    return total


def entropy_h(h_star: float, d: int, config: EntropyConfig) -> float:
    """Apply the missing-vote penalty: H = H* * (1 + f_p * (T - d))."""
    if not 1 <= d <= config.ensemble_size:
        raise InvariantViolation(f"d must be in [1, T={config.ensemble_size}], got {d}")
    return h_star * (1.0 + config.penalty * (config.ensemble_size - d))


def quantify_frame(merged: Sequence[MergedObject], config: EntropyConfig) -> list[QuantifiedObject]:
    """Quantify every merged object in a frame, preserving order.

    This is the per-frame hot path, so the config is unpacked once and the
    fuse / H* / H arithmetic runs inline; the standalone functions above
    spell out the same math piecewise.
    """
    count = config.class_count
    t_count = config.ensemble_size
    penalty = config.penalty
    theta_w = config.theta_w
    zero_fill = config.policy == "zero-fill"
    log = math.log2 if config.log_base == "2" else math.log
    out: list[QuantifiedObject] = []
    for obj in merged:
        d = len(obj.members)
        if not 1 <= d <= t_count:
            raise InvariantViolation(f"d must be in [1, T={t_count}], got {d}")
        sums = _summed_probs(obj, count)
        denom = t_count if zero_fill else d
        fused = tuple(s / denom if s < denom else 1.0 for s in sums)
        h_star = 0.0
        for p in fused:
            if 0.0 < p < 1.0:
                q = 1.0 - p
                h_star -= p * log(p) + q * log(q)
        h = h_star * (1.0 + penalty * (t_count - d))
        out.append(
            QuantifiedObject(
                box=obj.box,
                label=obj.label,
                fused_probs=fused,
                d=d,
                h_star=h_star,
                h=h,
                warned=h > theta_w,
            )
        )
    return out


def quantify_object(merged: MergedObject, config: EntropyConfig) -> QuantifiedObject:
    """Fuse, score and threshold a single merged object."""
    return quantify_frame([merged], config)[0]
