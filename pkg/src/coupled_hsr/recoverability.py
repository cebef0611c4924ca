"""Recoverability of the SRI under the coupled Tucker and CP models.

Generic region labels depend only on sizes and ranks; the deterministic
checks evaluate the rank conditions on a concrete model and degradation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .degradation import DegradationSet, degrade
from .linalg import numerical_rank
from .tensor_core import CPModel, TuckerModel, unfold

__all__ = [
    "DeterministicReport",
    "RANK_RTOL",
    "RegionLabel",
    "check_cp_partial_uniqueness",
    "check_deterministic",
    "classify_generic",
    "region_map",
    "sylvester_option",
]

RANK_RTOL = 1e-10


class RegionLabel(str, Enum):
    RECOVERABLE_A = "RECOVERABLE_A"
    RECOVERABLE_B = "RECOVERABLE_B"
    RECOVERABLE_BOTH = "RECOVERABLE_BOTH"
    CONDITION_VIOLATED = "CONDITION_VIOLATED"
    NON_RECOVERABLE = "NON_RECOVERABLE"

    @property
    def recoverable(self) -> bool:
        return self in (RegionLabel.RECOVERABLE_A, RegionLabel.RECOVERABLE_B, RegionLabel.RECOVERABLE_BOTH)


def classify_generic(
    dims: Sequence[int],
    hsi_dims: Sequence[int],
    k_m: int,
    ranks: Sequence[int],
) -> RegionLabel:
    """Generic recoverability label for multilinear ranks ``(R1, R2, R3)``.

    ``A``: ``R1 <= I_H`` and ``R2 <= J_H``.  ``B``: ``R3 <= K_M``.  Either one,
    together with the rank-persistence inequalities

        R1 <= min(R3, K_M) R2,  R2 <= min(R3, K_M) R1,  R3 <= min(R1, I_H) min(R2, J_H),

    gives a unique SRI with probability one.  Neither one gives infinitely many.
    """
    i, j, k = (int(x) for x in dims)
    i_h, j_h = (int(x) for x in hsi_dims)
    r1, r2, r3 = (int(x) for x in ranks)
    if not (1 <= r1 <= i and 1 <= r2 <= j and 1 <= r3 <= k):
        raise ValueError(f"ranks {tuple(ranks)} out of range for dims {tuple(dims)}")
    cond_a = r1 <= i_h and r2 <= j_h
    cond_b = r3 <= k_m
    if not (cond_a or cond_b):
        return RegionLabel.NON_RECOVERABLE
    m = min(r3, k_m)
    persistent = r1 <= m * r2 and r2 <= m * r1 and r3 <= min(r1, i_h) * min(r2, j_h)
    if not persistent:
        return RegionLabel.CONDITION_VIOLATED
    if cond_a and cond_b:
        return RegionLabel.RECOVERABLE_BOTH
    return RegionLabel.RECOVERABLE_A if cond_a else RegionLabel.RECOVERABLE_B


def sylvester_option(dims, hsi_dims, k_m, ranks) -> int:
    """Matricization used for the core solve: 1 in subregion (a), 2 in (b).

    Outside a single subregion the cheaper option by flop count is used;
    ties go to option 1.
    """
    label = classify_generic(dims, hsi_dims, k_m, ranks)
    if label is RegionLabel.RECOVERABLE_A:
        return 1
    if label is RegionLabel.RECOVERABLE_B:
        return 2
    r1, r2, r3 = ranks
    cost1 = r3**3 + (r1 * r2) ** 3
    cost2 = r1**3 + (r2 * r3) ** 3
    return 2 if cost2 < cost1 else 1


@dataclass(frozen=True)
class DeterministicReport:
    recoverable: bool
    which: str  # "A", "B", "both" or "none"
    ranks: dict


def check_deterministic(model: TuckerModel, deg: DegradationSet, rtol: float = RANK_RTOL) -> DeterministicReport:
    """Evaluate the deterministic recovery conditions for a Tucker SRI.

    Requires the unfolding ranks of the degraded images to equal the model's
    multilinear ranks, and either ``rank(P1 U) = R1 and rank(P2 V) = R2``
    (condition a) or ``rank(P_M W) = R3`` (condition b).
    """
    r1, r2, r3 = model.ranks
    hsi, msi = degrade(model.full(), deg)
    ranks = {
        "msi_unfold1": numerical_rank(unfold(msi, 1), rtol),
        "msi_unfold2": numerical_rank(unfold(msi, 2), rtol),
        "hsi_unfold3": numerical_rank(unfold(hsi, 3), rtol),
        "p1u": numerical_rank(deg.p1 @ model.u, rtol),
        "p2v": numerical_rank(deg.p2 @ model.v, rtol),
        "pmw": numerical_rank(deg.pm @ model.w, rtol),
    }
    persistent = (ranks["msi_unfold1"], ranks["msi_unfold2"], ranks["hsi_unfold3"]) == (r1, r2, r3)
    cond_a = ranks["p1u"] == r1 and ranks["p2v"] == r2
    cond_b = ranks["pmw"] == r3
    which = {(True, True): "both", (True, False): "A", (False, True): "B", (False, False): "none"}[(cond_a, cond_b)]
    return DeterministicReport(persistent and (cond_a or cond_b), which, ranks)


def check_cp_partial_uniqueness(model: CPModel, deg: DegradationSet, rtol: float = RANK_RTOL) -> bool:
    """Hypotheses of the partial-uniqueness recovery result for a CP SRI.

    ``rank(A) = rank(P1 A) = rank(B) = rank(P2 B) = F <= min(I_H, J_H)`` and no
    column of ``P_M C`` vanishes.
    """
    f = model.rank
    i_h, j_h = deg.hsi_shape
    if f > min(i_h, j_h):
        return False
    for m in (model.a, deg.p1 @ model.a, model.b, deg.p2 @ model.b):
        if numerical_rank(m, rtol) != f:
            return False
    pmc = deg.pm @ model.c
    col_norms = np.linalg.norm(pmc, axis=0)
    return bool(np.all(col_norms > 1e-12 * np.linalg.norm(model.c)))


def region_map(
    dims: Sequence[int],
    hsi_dims: Sequence[int],
    k_m: int,
    r1_range: Iterable[int],
    r3_range: Iterable[int],
) -> list[tuple[int, int, RegionLabel]]:
    """Labels on an ``R1 = R2`` by ``R3`` grid; rows ``(R1, R3, label)``."""
    r3_values = list(r3_range)
    return [
        (r1, r3, classify_generic(dims, hsi_dims, k_m, (r1, r1, r3)))
        for r1 in r1_range
        for r3 in r3_values
    ]
