"""Coupled Tucker fusion: SCOTT, its blind variant and the block version B-SCOTT."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._blocks import BlockError, BlockGrid, blockwise
from .degradation import DegradationSet
from .linalg import (
    SingularOperator,
    SpectrumReport,
    SylvesterSystem,
    hosvd,
    kron_sum_spectrum,
    numerical_rank,
    solve_sylvester,
    tsvd,
)
from .recoverability import sylvester_option
from .tensor_core import TuckerModel, as_cube, fold, multilinear_product, unfold

__all__ = [
    "BlockError",
    "BlockGrid",
    "CoreSystem",
    "NEAR_SINGULAR_RTOL",
    "ScottConfig",
    "ScottResult",
    "SingularCoreWarning",
    "blind_scott",
    "bscott",
    "scott",
]

# sigma_min / sigma_max of X^T X below which the core is taken as the minimum-norm solution.
NEAR_SINGULAR_RTOL = 1e-10


class SingularCoreWarning(RuntimeWarning):
    """The core normal equations are singular; a minimum-norm core was returned."""


@dataclass(frozen=True)
class ScottConfig:
    ranks: tuple[int, int, int]
    lam: float = 1.0
    on_singular: str = "min_norm"  # or "raise"

    def __post_init__(self):
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        if len(self.ranks) != 3 or min(self.ranks) < 1:
            raise ValueError(f"ranks must be three positive integers, got {self.ranks}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.on_singular not in ("min_norm", "raise"):
            raise ValueError(f"on_singular must be 'min_norm' or 'raise', got {self.on_singular!r}")


@dataclass(frozen=True)
class ScottResult:
    """Unpacks as ``(sri_hat, model, report)``."""

    sri_hat: np.ndarray
    model: TuckerModel
    report: SpectrumReport
    singular: bool = False
    option: int = 1

    def __iter__(self):
        return iter((self.sri_hat, self.model, self.report))


def _check_pair(hsi: np.ndarray, msi: np.ndarray) -> None:
    if hsi.shape[2] < msi.shape[2]:
        raise ValueError(f"HSI has fewer bands ({hsi.shape[2]}) than the MSI ({msi.shape[2]})")


class CoreSystem:
    """Normal equations for the core given fixed factors ``u, v, w``.

    ``X^T X = I kron (V'P2'P2V) kron (U'P1'P1U) + lam (W'PM'PMW) kron I``
    and the right-hand side is assembled by mode contractions of the data,
    never materializing ``X``.
    """

    def __init__(self, hsi, msi, deg: DegradationSet, u, v, w, lam: float = 1.0):
        self.hsi, self.msi, self.deg = hsi, msi, deg
        self.u, self.v, self.w, self.lam = u, v, w, float(lam)
        self.pu = deg.p1 @ u
        self.pv = deg.p2 @ v
        self.pw = deg.pm @ w
        self.au = self.pu.T @ self.pu
        self.av = self.pv.T @ self.pv
        self.dw = self.lam * (self.pw.T @ self.pw)
        self.rhs = multilinear_product(hsi, self.pu.T, self.pv.T, w.T) + self.lam * multilinear_product(
            msi, u.T, v.T, self.pw.T
        )

    @property
    def ranks(self) -> tuple[int, int, int]:
        return (self.u.shape[1], self.v.shape[1], self.w.shape[1])

    def spectrum(self) -> SpectrumReport:
        return kron_sum_spectrum([self.av, self.au], self.dw)

    def sylvester(self, option: int) -> SylvesterSystem:
        r1, r2, r3 = self.ranks
        if option == 1:
            # G = unfold(core, 3), (R1 R2) x R3
            return SylvesterSystem(np.kron(self.av, self.au), np.eye(r3), np.eye(r1 * r2), self.dw, unfold(self.rhs, 3))
        if option == 2:
            # G = unfold(core, 1)^T, R1 x (R2 R3)
            return SylvesterSystem(
                self.au, np.kron(np.eye(r3), self.av), np.eye(r1), np.kron(self.dw, np.eye(r2)), unfold(self.rhs, 1).T
            )
        raise ValueError(f"option must be 1 or 2, got {option}")

    def solve(self, option: int = 1, min_norm: bool = False, rcond: float = NEAR_SINGULAR_RTOL) -> np.ndarray:
        g = solve_sylvester(self.sylvester(option), rcond=rcond, min_norm=min_norm)
        if option == 1:
            return fold(g, 3, self.ranks)
        return fold(g.T, 1, self.ranks)

    def null_space(self, rcond: float = NEAR_SINGULAR_RTOL) -> np.ndarray:
        """Orthonormal cores spanning the (numerical) kernel of ``X^T X``.

        Returned as an array of shape ``(n_null, R1, R2, R3)``.
        """
        su, qu = np.linalg.eigh(self.au)
        sv, qv = np.linalg.eigh(self.av)
        sd, qd = np.linalg.eigh(self.dw)
        lam = np.multiply.outer(np.multiply.outer(su, sv), np.ones_like(sd)) + sd[None, None, :]
        idx = np.argwhere(lam <= rcond * lam.max())
        return np.array([np.einsum("i,j,k->ijk", qu[:, p], qv[:, q], qd[:, r]) for p, q, r in idx]).reshape(
            len(idx), *self.ranks
        )

    def cost(self, core: np.ndarray) -> float:
        """Coupled Tucker cost ``||Y_H - ...||^2 + lam ||Y_M - ...||^2`` at ``core``."""
        res_h = self.hsi - multilinear_product(core, self.pu, self.pv, self.w)
        res_m = self.msi - multilinear_product(core, self.u, self.v, self.pw)
        return float(np.sum(res_h**2) + self.lam * np.sum(res_m**2))


def scott(hsi, msi, deg: DegradationSet, cfg: ScottConfig | Sequence[int]) -> ScottResult:
    """SCOTT: factors from truncated SVDs of the MSI/HSI unfoldings, core by least squares.

    Parameters
    ----------
    hsi, msi:
        Degraded cubes of shapes ``(I_H, J_H, K)`` and ``(I, J, K_M)``.
    deg:
        Known degradation matrices.
    cfg:
        Multilinear ranks and weight ``lam`` of the MSI term; a bare rank
        triple uses ``lam = 1``.

    Returns
    -------
    ScottResult
        Unpacks as ``(sri_hat, model, report)``; ``report`` holds the extreme
        singular values and the condition number of ``X^T X``.  When ``X^T X``
        is numerically singular (``sigma_min/sigma_max < 1e-10``) the
        minimum-norm core is returned, ``singular`` is set and a
        :class:`SingularCoreWarning` is issued, unless
        ``cfg.on_singular == "raise"``, in which case :class:`SingularOperator`
        propagates.
    """
    if not isinstance(cfg, ScottConfig):
        cfg = ScottConfig(tuple(cfg))
    hsi, msi = as_cube(hsi), as_cube(msi)
    _check_pair(hsi, msi)
    i, j, k = deg.sri_shape
    if msi.shape != (i, j, deg.k_m) or hsi.shape != (*deg.hsi_shape, k):
        raise ValueError(f"cube shapes {hsi.shape}, {msi.shape} inconsistent with degradation")
    r1, r2, r3 = cfg.ranks
    if r1 > min(i, j * deg.k_m) or r2 > min(j, i * deg.k_m) or r3 > min(k, hsi.shape[0] * hsi.shape[1]):
        raise ValueError(f"ranks {cfg.ranks} out of range for SRI {deg.sri_shape} and these degraded images")

    u = tsvd(unfold(msi, 1), r1)
    v = tsvd(unfold(msi, 2), r2)
    w = tsvd(unfold(hsi, 3), r3)
    system = CoreSystem(hsi, msi, deg, u, v, w, cfg.lam)
    report = system.spectrum()
    option = sylvester_option((i, j, k), deg.hsi_shape, deg.k_m, cfg.ranks)

    singular = report.sigma_max == 0 or report.sigma_min <= NEAR_SINGULAR_RTOL * report.sigma_max
    if singular:
        if cfg.on_singular == "raise":
            raise SingularOperator(
                f"X^T X is singular for ranks {cfg.ranks} (sigma_min={report.sigma_min:.3e}, "
                f"sigma_max={report.sigma_max:.3e})",
                report.sigma_min,
                report.sigma_max,
            )
        warnings.warn(
            f"X^T X is singular for ranks {cfg.ranks}; returning the minimum-norm core",
            SingularCoreWarning,
            stacklevel=2,
        )
    core = system.solve(option, min_norm=singular)
    model = TuckerModel(core, u, v, w)
    return ScottResult(model.full(), model, report, singular, option)


def blind_scott(hsi, msi, pm: np.ndarray, ranks: Sequence[int]) -> np.ndarray:
    """Blind SCOTT: HOSVD of the MSI, spectral factor corrected by the HSI subspace.

    ``W = Z (P_M Z)^+ W_msi`` where ``Z`` spans the dominant row space of the
    third HSI unfolding.  The spatial degradation is not used.
    """
    hsi, msi = as_cube(hsi), as_cube(msi)
    _check_pair(hsi, msi)
    pm = np.atleast_2d(np.asarray(pm, dtype=float))
    r1, r2, r3 = (int(r) for r in ranks)
    k_m, k = pm.shape
    if msi.shape[2] != k_m or hsi.shape[2] != k:
        raise ValueError(f"P_M of shape {pm.shape} does not match HSI {hsi.shape} / MSI {msi.shape}")
    if r3 > k_m:
        raise ValueError(f"R3={r3} must not exceed the number of MSI bands K_M={k_m}")
    if r1 > msi.shape[0] or r2 > msi.shape[1]:
        raise ValueError(f"spatial ranks {(r1, r2)} exceed MSI size {msi.shape[:2]}")
    model = hosvd(msi, (r1, r2, r3))
    z = tsvd(unfold(hsi, 3), r3)
    pz = pm @ z
    if numerical_rank(pz) < r3:
        warnings.warn(f"P_M Z is rank deficient (rank {numerical_rank(pz)} < R3={r3})", RuntimeWarning, stacklevel=2)
    w = z @ np.linalg.pinv(pz) @ model.w
    return multilinear_product(model.core, model.u, model.v, w)


def bscott(hsi, msi, pm: np.ndarray, ranks: Sequence[int], grid: BlockGrid, workers: int = 1) -> np.ndarray:
    """B-SCOTT: :func:`blind_scott` applied to matching spatial blocks."""
    hsi, msi = as_cube(hsi), as_cube(msi)
    return blockwise(hsi, msi, grid, lambda h, m: blind_scott(h, m, pm, ranks), workers)
