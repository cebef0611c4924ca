"""Truncated SVD, HOSVD, generalized Sylvester solves and Kronecker-sum spectra."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .tensor_core import TuckerModel, mode_contract, unfold

__all__ = [
    "EPS_SING",
    "SingularOperator",
    "SpectrumReport",
    "SylvesterSystem",
    "hosvd",
    "kron_sum_spectrum",
    "numerical_rank",
    "solve_sylvester",
    "sylvester_residual",
    "tsvd",
]

# Relative singularity threshold of the Sylvester operator.
EPS_SING = 1e-12


class SingularOperator(np.linalg.LinAlgError):
    """The operator ``G -> A G B + C G D`` is (numerically) singular."""

    def __init__(self, message: str, smallest: float = 0.0, largest: float = 0.0):
        super().__init__(message)
        self.smallest = smallest
        self.largest = largest


def _fix_signs(q: np.ndarray) -> np.ndarray:
    # Largest-magnitude entry of each column made positive; argmax picks the first on ties.
    idx = np.argmax(np.abs(q), axis=0)
    signs = np.sign(q[idx, np.arange(q.shape[1])])
    signs[signs == 0] = 1.0
    return q * signs


def tsvd(m: np.ndarray, r: int) -> np.ndarray:
    """Leading ``r`` right singular vectors of ``m`` as an ``(n, r)`` matrix.

    Columns are orthonormal and carry a deterministic sign: the entry of
    largest magnitude in each column is positive.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    r = int(r)
    if not 1 <= r <= min(m.shape):
        raise ValueError(f"rank {r} out of range for a {m.shape[0]}x{m.shape[1]} matrix")
    if m.shape[0] > 2 * m.shape[1]:
        # Tall input: the R factor has the same right singular vectors.
        m = np.linalg.qr(m, mode="r")
    _, _, vt = np.linalg.svd(m, full_matrices=False)
    return _fix_signs(vt[:r].T.copy())


def numerical_rank(m: np.ndarray, rtol: float = 1e-10) -> int:
    """Number of singular values above ``rtol * sigma_max``."""
    s = np.linalg.svd(np.atleast_2d(m), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def hosvd(t: np.ndarray, ranks: Sequence[int]) -> TuckerModel:
    """Truncated higher-order SVD with multilinear ranks ``ranks``."""
    t = np.asarray(t, dtype=float)
    ranks = tuple(int(r) for r in ranks)
    for n, (r, size) in enumerate(zip(ranks, t.shape), start=1):
        if not 1 <= r <= size:
            raise ValueError(f"rank R{n}={r} out of range for mode size {size}")
    factors = [tsvd(unfold(t, n), r) for n, r in zip((1, 2, 3), ranks)]
    core = t
    for n, f in zip((1, 2, 3), factors):
        core = mode_contract(core, f.T, n)
    return TuckerModel(core, *factors)


@dataclass(frozen=True)
class SylvesterSystem:
    """``A G B + C G D = E`` with ``G`` of shape ``(m, n)``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        m, n = np.shape(self.e)
        for name, mat, size in (("a", self.a, m), ("c", self.c, m), ("b", self.b, n), ("d", self.d, n)):
            if np.shape(mat) != (size, size):
                raise ValueError(f"{name} has shape {np.shape(mat)}, expected {(size, size)}")

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(np.shape(self.e))

    def apply(self, g: np.ndarray) -> np.ndarray:
        return self.a @ g @ self.b + self.c @ g @ self.d

    def dense_operator(self) -> np.ndarray:
        """``B^T kron A + D^T kron C`` acting on ``vec(G)``; for tests and small systems."""
        return np.kron(self.b.T, self.a) + np.kron(self.d.T, self.c)


def sylvester_residual(sys: SylvesterSystem, g: np.ndarray) -> float:
    """Relative residual ``||A G B + C G D - E|| / ||E||``."""
    num = np.linalg.norm(sys.apply(g) - sys.e)
    den = np.linalg.norm(sys.e)
    return float(num / den) if den > 0 else float(num)


def _is_symmetric(m: np.ndarray, tol: float = 1e-13) -> bool:
    return np.allclose(m, m.T, rtol=0.0, atol=tol * max(1.0, np.abs(m).max(initial=0.0)))


def _commute(x: np.ndarray, y: np.ndarray, tol: float = 1e-12) -> bool:
    scale = np.linalg.norm(x) * np.linalg.norm(y)
    return np.linalg.norm(x @ y - y @ x) <= tol * max(scale, 1e-300)


def _joint_eigh(x: np.ndarray, y: np.ndarray, cluster_tol: float = 1e-11):
    """Common eigenbasis of two commuting symmetric matrices.

    Diagonalizes ``x``, then ``y`` restricted to each cluster of (numerically)
    repeated eigenvalues of ``x``.
    """
    lam, q = np.linalg.eigh(x)
    scale = max(np.abs(lam).max(initial=0.0), 1e-300)
    q = q.copy()
    start = 0
    n = lam.size
    while start < n:
        stop = start + 1
        while stop < n and lam[stop] - lam[stop - 1] <= cluster_tol * scale:
            stop += 1
        if stop - start > 1:
            block = q[:, start:stop]
            _, p = np.linalg.eigh(block.T @ y @ block)
            q[:, start:stop] = block @ p
        start = stop
    ex = np.einsum("ij,ik,kj->j", q, x, q)
    ey = np.einsum("ij,ik,kj->j", q, y, q)
    return ex, ey, q


def _symmetric_path(sys: SylvesterSystem, rcond: float, min_norm: bool) -> np.ndarray:
    a_vals, c_vals, q1 = _joint_eigh(sys.a, sys.c)
    b_vals, d_vals, q2 = _joint_eigh(sys.b, sys.d)
    # Operator eigenvalues a_i b_j + c_i d_j with eigenvectors q2[:, j] kron q1[:, i].
    lam = np.outer(a_vals, b_vals) + np.outer(c_vals, d_vals)
    big = np.abs(lam).max(initial=0.0)
    small = np.abs(lam) <= rcond * big
    if big == 0.0 or (small.any() and not min_norm):
        smallest = float(np.abs(lam).min(initial=0.0))
        raise SingularOperator(
            f"Sylvester operator is singular: |lambda|_min={smallest:.3e}, |lambda|_max={big:.3e}",
            smallest,
            float(big),
        )
    e_t = q1.T @ sys.e @ q2
    g_t = np.zeros_like(e_t)
    keep = ~small
    g_t[keep] = e_t[keep] / lam[keep]
    return q1 @ g_t @ q2.T


def _qz_path(sys: SylvesterSystem, rcond: float) -> np.ndarray:
    # Generalized Bartels-Stewart: A = Q1 S1 Z1^H, C = Q1 T1 Z1^H and
    # B^T = Q2 S2 Z2^H, D^T = Q2 T2 Z2^H reduce the equation to
    # S1 Y S2^T + T1 Y T2^T = F with triangular factors.
    s1, t1, q1, z1 = sla.qz(sys.a, sys.c, output="complex")
    s2, t2, q2, z2 = sla.qz(sys.b.T, sys.d.T, output="complex")
    diag = np.outer(np.diag(s1), np.diag(s2)) + np.outer(np.diag(t1), np.diag(t2))
    big = np.abs(diag).max(initial=0.0)
    if big == 0.0 or np.abs(diag).min() <= rcond * big:
        smallest = float(np.abs(diag).min(initial=0.0))
        raise SingularOperator(
            f"Sylvester operator is singular: |lambda|_min={smallest:.3e}, |lambda|_max={big:.3e}",
            smallest,
            float(big),
        )
    f = q1.conj().T @ sys.e @ q2.conj()
    m, n = f.shape
    y = np.zeros((m, n), dtype=complex)
    for j in range(n - 1, -1, -1):
        rhs = f[:, j].copy()
        if j < n - 1:
            tail = y[:, j + 1 :]
            rhs -= s1 @ (tail @ s2[j, j + 1 :]) + t1 @ (tail @ t2[j, j + 1 :])
        lhs = s2[j, j] * s1 + t2[j, j] * t1
        y[:, j] = sla.solve_triangular(lhs, rhs, lower=False)
    g = z1 @ y @ z2.T
    return g.real if np.isrealobj(sys.e) else g


def solve_sylvester(sys: SylvesterSystem, rcond: float = EPS_SING, min_norm: bool = False) -> np.ndarray:
    """Solve ``A G B + C G D = E``.

    When ``A, C`` and ``B, D`` are symmetric commuting pairs (the structure of
    the Tucker core normal equations) both pairs are diagonalized in a common
    eigenbasis and the solve is a diagonal division.  Otherwise a complex QZ
    reduction followed by column-wise back substitution is used.  Both cost
    ``O(m^3 + n^3)``.

    Parameters
    ----------
    sys:
        The system.
    rcond:
        Operator eigenvalues with modulus ``<= rcond * max`` count as zero.
    min_norm:
        On the symmetric path, return the minimum-norm least-squares solution
        instead of raising when the operator is singular.

    Raises
    ------
    SingularOperator
        If the operator is numerically singular and no minimum-norm solution
        was requested (or the system is not symmetric).
    """
    a, b, c, d = (np.asarray(x, dtype=float) for x in (sys.a, sys.b, sys.c, sys.d))
    sys = SylvesterSystem(a, b, c, d, np.asarray(sys.e, dtype=float))
    symmetric = all(_is_symmetric(x) for x in (a, b, c, d))
    if symmetric and _commute(a, c) and _commute(b, d):
        return _symmetric_path(sys, rcond, min_norm)
    return _qz_path(sys, rcond)


@dataclass(frozen=True)
class SpectrumReport:
    """Extreme singular values and condition number of ``I kron A + D kron I``."""

    sigma_max: float
    sigma_min: float
    cond: float

    @property
    def singular(self) -> bool:
        return not np.isfinite(self.cond)


def _sym_eigvals(m) -> np.ndarray:
    if isinstance(m, (list, tuple)):
        # Kronecker factors: eigenvalues of a Kronecker product are products.
        vals = np.ones(1)
        for f in m:
            vals = np.multiply.outer(_sym_eigvals(f), vals).ravel()
        return vals
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return np.linalg.eigvalsh((m + m.T) / 2)


def kron_sum_spectrum(a_kron, d, tol: float = EPS_SING) -> SpectrumReport:
    """Spectrum extremes of ``I_n kron A + D kron I_m`` for symmetric PSD ``A``, ``D``.

    The eigenvalues of a Kronecker sum are all pairwise sums of eigenvalues
    of ``A`` and ``D``, so only the two small eigenproblems are solved.
    ``a_kron`` may be given as a matrix or as a sequence of Kronecker factors.
    """
    ea = _sym_eigvals(a_kron)
    ed = _sym_eigvals(d)
    smax = float(ea.max() + ed.max())
    smin = float(ea.min() + ed.min())
    if smax <= 0 or smin <= tol * smax:
        return SpectrumReport(smax, max(smin, 0.0), float("inf"))
    return SpectrumReport(smax, smin, smax / smin)
