"""Dense 3-way tensor arithmetic.

Cubes are plain ``numpy`` arrays of shape ``(I, J, K)``.  Vectorization is
column-major (first index fastest), so ``vec(Y) = Y.reshape(-1, order="F")``.
The mode-n unfolding puts the mode index on the columns:

    unfold(Y, 1) -> (J*K, I),  unfold(Y, 2) -> (I*K, J),  unfold(Y, 3) -> (I*J, K)

which gives ``unfold(multilinear_product(G, U, V, W), 1) = kron(W, V) @ unfold(G, 1) @ U.T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CPModel",
    "TuckerModel",
    "as_cube",
    "cp_to_tensor",
    "fold",
    "khatri_rao",
    "kron",
    "mode_contract",
    "multilinear_product",
    "unfold",
    "vec",
]


def _check_mode(mode: int) -> int:
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    return mode


def as_cube(t) -> np.ndarray:
    """Validate and return ``t`` as a finite float64 cube."""
    arr = np.asarray(t, dtype=float)
    if arr.ndim != 3:
        raise ValueError(f"expected a 3-way array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("cube contains non-finite entries")
    return arr


def vec(t: np.ndarray) -> np.ndarray:
    """Column-major vectorization."""
    return np.asarray(t).reshape(-1, order="F")


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding with the mode index along the columns.

    Column ``i`` of ``unfold(t, 1)`` is ``vec(t[i, :, :])``.
    """
    _check_mode(mode)
    t = np.asarray(t)
    if t.ndim != 3:
        raise ValueError(f"expected a 3-way array, got shape {t.shape}")
    moved = np.moveaxis(t, mode - 1, -1)
    return moved.reshape(-1, t.shape[mode - 1], order="F")


def fold(m: np.ndarray, mode: int, dims: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    _check_mode(mode)
    m = np.asarray(m)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3:
        raise ValueError(f"dims must have three entries, got {dims}")
    rest = [d for n, d in enumerate(dims) if n != mode - 1]
    expected = (rest[0] * rest[1], dims[mode - 1])
    if m.shape != expected:
        raise ValueError(
            f"matrix of shape {m.shape} cannot be folded along mode {mode} "
            f"into {dims}; expected shape {expected}"
        )
    moved = m.reshape(rest[0], rest[1], dims[mode - 1], order="F")
    return np.moveaxis(moved, -1, mode - 1)


def mode_contract(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """Contract ``t`` with ``m`` on the second index of ``m``.

    ``[t x_1 M]_{ijk} = sum_l t_{ljk} M_{il}``.
    """
    _check_mode(mode)
    t = np.asarray(t)
    m = np.atleast_2d(np.asarray(m))
    if m.shape[1] != t.shape[mode - 1]:
        raise ValueError(
            f"cannot contract mode {mode} of size {t.shape[mode - 1]} "
            f"with a matrix of shape {m.shape}"
        )
    dims = list(t.shape)
    dims[mode - 1] = m.shape[0]
    return fold(unfold(t, mode) @ m.T, mode, tuple(dims))


def multilinear_product(g: np.ndarray, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``g x_1 u x_2 v x_3 w``."""
    g = np.asarray(g)
    for name, mat, size in (("u", u, g.shape[0]), ("v", v, g.shape[1]), ("w", w, g.shape[2])):
        if np.shape(mat)[1] != size:
            raise ValueError(f"{name} has {np.shape(mat)[1]} columns, core mode has size {size}")
    out = mode_contract(g, u, 1)
    out = mode_contract(out, v, 2)
    return mode_contract(out, w, 3)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; column ``r`` is ``kron(a[:, r], b[:, r])``."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"column counts differ: {a.shape[1]} vs {b.shape[1]}")
    return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], a.shape[1])


@dataclass(frozen=True)
class TuckerModel:
    """Core ``(R1, R2, R3)`` with factors ``u (I x R1)``, ``v (J x R2)``, ``w (K x R3)``."""

    core: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        if self.core.ndim != 3:
            raise ValueError("core must be a 3-way array")
        for name, mat, size in (("u", self.u, 0), ("v", self.v, 1), ("w", self.w, 2)):
            if mat.ndim != 2 or mat.shape[1] != self.core.shape[size]:
                raise ValueError(f"factor {name} of shape {mat.shape} incompatible with core {self.core.shape}")

    @property
    def ranks(self) -> tuple[int, int, int]:
        return tuple(self.core.shape)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.u.shape[0], self.v.shape[0], self.w.shape[0])

    def full(self) -> np.ndarray:
        return multilinear_product(self.core, self.u, self.v, self.w)


@dataclass(frozen=True)
class CPModel:
    """Rank-F polyadic model ``[[a, b, c]]``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        cols = {self.a.shape[1], self.b.shape[1], self.c.shape[1]}
        if len(cols) != 1 or self.a.shape[1] < 1:
            raise ValueError(
                f"factors must share a positive column count, got {self.a.shape}, {self.b.shape}, {self.c.shape}"
            )

    @property
    def rank(self) -> int:
        return self.a.shape[1]

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.a.shape[0], self.b.shape[0], self.c.shape[0])

    def full(self) -> np.ndarray:
        return cp_to_tensor(self)


def cp_to_tensor(m: CPModel) -> np.ndarray:
    """Sum of rank-one terms; ``unfold(result, 1) = khatri_rao(c, b) @ a.T``."""
    i, j, k = m.shape
    return fold(khatri_rao(m.c, m.b) @ m.a.T, 1, (i, j, k))
