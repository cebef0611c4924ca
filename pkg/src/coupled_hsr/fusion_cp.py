"""CP-based fusion baselines: TenRec, STEREO, hybrid and SCUBA, plus the CP-ALS they build on."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._blocks import BlockGrid, blockwise
from .degradation import DegradationSet
from .linalg import SingularOperator, SylvesterSystem, hosvd, numerical_rank, solve_sylvester, tsvd
from .tensor_core import CPModel, as_cube, khatri_rao, unfold

__all__ = [
    "CPFit",
    "FACTOR_NORM_CAP",
    "PINV_RTOL",
    "RankDeficientWarning",
    "StereoConfig",
    "StereoResult",
    "coupled_cp_cost",
    "cp_als",
    "fit_cp",
    "hybrid",
    "scuba",
    "stereo",
    "tenrec",
]

FACTOR_NORM_CAP = 1e8
# Relative singular-value cutoff of the pseudoinverses in the algebraic steps.
PINV_RTOL = 1e-10


class RankDeficientWarning(RuntimeWarning):
    """A least-squares subproblem was rank deficient and solved by pseudoinverse."""


@dataclass(frozen=True)
class CPFit:
    model: CPModel
    rel_error: float
    iters: int
    converged: bool
    diverged: bool = False
    rank_deficient: bool = False
    history: tuple[float, ...] = ()


def _mttkrp(t: np.ndarray, factors: list[np.ndarray], mode: int) -> np.ndarray:
    # Y^(n)^T (khatri-rao of the other two factors), without forming it.
    a, b, c = factors
    if mode == 1:
        return np.einsum("ijk,jf,kf->if", t, b, c, optimize=True)
    if mode == 2:
        return np.einsum("ijk,if,kf->jf", t, a, c, optimize=True)
    return np.einsum("ijk,if,jf->kf", t, a, b, optimize=True)


def _gram_solve(rhs: np.ndarray, gram: np.ndarray, rcond: float = 1e-13) -> tuple[np.ndarray, bool]:
    s = np.linalg.svd(gram, compute_uv=False)
    deficient = s[-1] <= rcond * s[0] if s[0] > 0 else True
    return rhs @ np.linalg.pinv(gram, rcond=rcond, hermitian=True), bool(deficient)


def _init_factors(t: np.ndarray, f: int, init, rng: np.random.Generator) -> list[np.ndarray]:
    if isinstance(init, CPModel):
        return [init.a.copy(), init.b.copy(), init.c.copy()]
    factors = []
    for n, size in zip((1, 2, 3), t.shape):
        if init == "random":
            factors.append(rng.standard_normal((size, f)))
            continue
        m = unfold(t, n)
        # Singular vectors past the numerical rank are orthogonal to the data and
        # would pin their components at zero; pad inside the dominant subspace instead.
        r = min(f, numerical_rank(m)) if np.any(m) else 0
        if r == 0:
            factors.append(rng.standard_normal((size, f)))
            continue
        u = tsvd(m, r)
        if r < f:
            u = np.hstack([u, u @ rng.standard_normal((r, f - r)) / np.sqrt(r)])
        factors.append(u)
    return factors


def _cp_cost(t: np.ndarray, factors) -> float:
    return float(np.sum((t - CPModel(*factors).full()) ** 2))


def _normalize(factors: list[np.ndarray]) -> list[np.ndarray]:
    # Unit columns in the first two factors, scale absorbed into the third.
    a, b, c = (x.copy() for x in factors)
    for x in (a, b):
        n = np.linalg.norm(x, axis=0)
        n[n == 0] = 1.0
        x /= n
        c *= n
    return [a, b, c]


def _als_once(t, f, max_iters, rel_tol, init, rng) -> CPFit:
    factors = _init_factors(t, f, init, rng)
    norm_t2 = float(np.sum(t**2))
    cost = _cp_cost(t, factors)
    history = [cost]
    deficient = diverged = converged = False
    it = 0
    for it in range(1, max_iters + 1):
        for n in range(3):
            others = [factors[m] for m in range(3) if m != n]
            gram = (others[0].T @ others[0]) * (others[1].T @ others[1])
            new, bad = _gram_solve(_mttkrp(t, factors, n + 1), gram)
            deficient |= bad
            factors[n] = new
        factors = _normalize(factors)
        new_cost = _cp_cost(t, factors)
        history.append(new_cost)
        if np.abs(factors[2]).max() > FACTOR_NORM_CAP * max(np.sqrt(norm_t2), 1.0):
            diverged = True
            break
        if new_cost <= (1e-15) ** 2 * norm_t2 or abs(cost - new_cost) <= rel_tol * max(cost, 1e-300):
            converged = True
            cost = new_cost
            break
        cost = new_cost
    rel = float(np.sqrt(cost / norm_t2)) if norm_t2 > 0 else float(np.sqrt(cost))
    return CPFit(CPModel(*factors), rel, it, converged, diverged, deficient, tuple(history))


def fit_cp(
    t,
    f: int,
    max_iters: int = 1000,
    rel_tol: float = 1e-12,
    init="hosvd",
    seed: int | None = 0,
    n_restarts: int = 0,
    compress: bool = False,
) -> CPFit:
    """Rank-``f`` CP approximation by alternating least squares.

    ``init`` is ``"hosvd"`` (leading singular vectors, padded with seeded
    random columns when ``f`` exceeds a mode size), ``"random"`` or a
    :class:`CPModel`.  ``n_restarts`` extra seeded random starts are tried
    and the best fit kept.  With ``compress`` the ALS runs on the HOSVD core
    of multilinear rank ``min(f, size)`` and the factors are lifted back,
    which is exact whenever the tensor's multilinear rank fits.

    Factor norms beyond ``FACTOR_NORM_CAP`` times the data norm stop the
    iteration with ``diverged`` set: a best low-rank CP approximation need
    not exist.
    """
    t = as_cube(t)
    if f < 1:
        raise ValueError(f"CP rank must be >= 1, got {f}")
    rng = np.random.default_rng(seed)
    lift = None
    if compress:
        ranks = [min(f, s, int(np.prod(t.shape)) // s) for s in t.shape]
        model = hosvd(t, ranks)
        lift = (model.u, model.v, model.w)
        if isinstance(init, CPModel):
            init = CPModel(model.u.T @ init.a, model.v.T @ init.b, model.w.T @ init.c)
        t_fit = model.core
    else:
        t_fit = t
    best = _als_once(t_fit, f, max_iters, rel_tol, init, rng)
    for _ in range(n_restarts):
        cand = _als_once(t_fit, f, max_iters, rel_tol, "random", rng)
        if not cand.diverged and (best.diverged or cand.rel_error < best.rel_error):
            best = cand
    if lift is not None:
        m = CPModel(lift[0] @ best.model.a, lift[1] @ best.model.b, lift[2] @ best.model.c)
        norm_t = np.linalg.norm(t)
        rel = float(np.linalg.norm(t - m.full()) / norm_t) if norm_t > 0 else 0.0
        best = CPFit(m, rel, best.iters, best.converged, best.diverged, best.rank_deficient, best.history)
    if best.rank_deficient:
        warnings.warn("rank-deficient ALS subproblem solved by pseudoinverse", RankDeficientWarning, stacklevel=2)
    return best


def cp_als(t, f: int, max_iters: int = 1000, rel_tol: float = 1e-12, **kwargs) -> CPModel:
    """Rank-``f`` CP model of ``t``; see :func:`fit_cp` for the options and diagnostics."""
    return fit_cp(t, f, max_iters, rel_tol, **kwargs).model


def tenrec(hsi, msi, deg: DegradationSet, f: int, **als) -> tuple[CPModel, np.ndarray]:
    """CP of the MSI for the spatial factors, then one least-squares solve for the spectral one."""
    hsi, msi = as_cube(hsi), as_cube(msi)
    fit = fit_cp(msi, f, **als)
    a, b = fit.model.a, fit.model.b
    kr = khatri_rao(deg.p2 @ b, deg.p1 @ a)
    if numerical_rank(kr, PINV_RTOL) < f:
        warnings.warn(f"(P2 B) kr (P1 A) has rank < F={f}; using the pseudoinverse", RankDeficientWarning, stacklevel=2)
    c = (np.linalg.pinv(kr, rcond=PINV_RTOL) @ unfold(hsi, 3)).T
    model = CPModel(a, b, c)
    return model, model.full()


@dataclass(frozen=True)
class StereoConfig:
    f_rank: int
    lam: float = 1.0
    max_iters: int = 25
    rel_tol: float = 1e-6

    def __post_init__(self):
        if self.f_rank < 1:
            raise ValueError(f"CP rank must be >= 1, got {self.f_rank}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")


@dataclass(frozen=True)
class StereoResult:
    """Unpacks as ``(model, sri_hat)``."""

    model: CPModel
    sri_hat: np.ndarray
    costs: tuple[float, ...] = ()
    iters: int = 0
    singular_updates: int = 0
    residuals: tuple[float, ...] = field(default=(), repr=False)

    def __iter__(self):
        return iter((self.model, self.sri_hat))


def coupled_cp_cost(hsi, msi, deg: DegradationSet, model: CPModel, lam: float = 1.0) -> float:
    """``||Y_H - [[P1 A, P2 B, C]]||^2 + lam ||Y_M - [[A, B, P_M C]]||^2``."""
    a, b, c = model.a, model.b, model.c
    res_h = hsi - CPModel(deg.p1 @ a, deg.p2 @ b, c).full()
    res_m = msi - CPModel(a, b, deg.pm @ c).full()
    return float(np.sum(res_h**2) + lam * np.sum(res_m**2))


def _solve_update(sys: SylvesterSystem) -> tuple[np.ndarray, bool, float]:
    try:
        g = solve_sylvester(sys)
        singular = False
    except SingularOperator:
        # Minimum-norm least-squares solution of the vectorized system.
        op = sys.dense_operator()
        vec = np.linalg.lstsq(op, sys.e.reshape(-1, order="F"), rcond=None)[0]
        g = vec.reshape(sys.shape, order="F")
        singular = True
    den = np.linalg.norm(sys.e)
    res = float(np.linalg.norm(sys.apply(g) - sys.e) / den) if den > 0 else 0.0
    return g, singular, res


def stereo(hsi, msi, deg: DegradationSet, cfg: StereoConfig | int, init: CPModel | None = None) -> StereoResult:
    """Alternating exact minimization of the coupled CP cost.

    Each factor update is the generalized Sylvester system given by the
    normal equations, e.g. for ``A``::

        P1'P1 A [(C'C) * ((P2B)'P2B)] + lam A [((P_M C)'P_M C) * (B'B)]
            = P1' Y_H^(1)' (C kr P2B) + lam Y_M^(1)' (P_M C kr B)

    with ``*`` the entrywise product.  ``B`` is symmetric to ``A``; the
    ``C`` update carries ``P_M'P_M`` on the ``lam`` term.  ``init`` defaults
    to :func:`tenrec`.
    """
    if not isinstance(cfg, StereoConfig):
        cfg = StereoConfig(int(cfg))
    hsi, msi = as_cube(hsi), as_cube(msi)
    f, lam = cfg.f_rank, cfg.lam
    if init is None:
        init, _ = tenrec(hsi, msi, deg, f)
    if init.rank != f:
        raise ValueError(f"initial model has rank {init.rank}, expected {f}")
    if init.shape != deg.sri_shape:
        raise ValueError(f"initial model shape {init.shape} does not match SRI {deg.sri_shape}")
    p1, p2, pm = deg.p1, deg.p2, deg.pm
    g1, g2, gm = p1.T @ p1, p2.T @ p2, pm.T @ pm
    a, b, c = init.a.copy(), init.b.copy(), init.c.copy()
    cost = coupled_cp_cost(hsi, msi, deg, CPModel(a, b, c), lam)
    floor = (1e-15) ** 2 * float(np.sum(hsi**2) + lam * np.sum(msi**2))
    costs = [cost]
    residuals = []
    n_singular = 0
    it = 0
    for it in range(1, cfg.max_iters + 1):
        prev = cost
        # A
        pb, pc = p2 @ b, pm @ c
        rhs = p1.T @ _mttkrp(hsi, [None, pb, c], 1) + lam * _mttkrp(msi, [None, b, pc], 1)
        sys = SylvesterSystem(g1, (c.T @ c) * (pb.T @ pb), np.eye(a.shape[0]), lam * (pc.T @ pc) * (b.T @ b), rhs)
        a, bad, res = _solve_update(sys)
        n_singular += bad
        residuals.append(res)
        costs.append(coupled_cp_cost(hsi, msi, deg, CPModel(a, b, c), lam))
        # B
        pa = p1 @ a
        rhs = p2.T @ _mttkrp(hsi, [pa, None, c], 2) + lam * _mttkrp(msi, [a, None, pc], 2)
        sys = SylvesterSystem(g2, (c.T @ c) * (pa.T @ pa), np.eye(b.shape[0]), lam * (pc.T @ pc) * (a.T @ a), rhs)
        b, bad, res = _solve_update(sys)
        n_singular += bad
        residuals.append(res)
        costs.append(coupled_cp_cost(hsi, msi, deg, CPModel(a, b, c), lam))
        # C
        pb = p2 @ b
        rhs = _mttkrp(hsi, [pa, pb, None], 3) + lam * pm.T @ _mttkrp(msi, [a, b, None], 3)
        sys = SylvesterSystem(np.eye(c.shape[0]), (pb.T @ pb) * (pa.T @ pa), lam * gm, (b.T @ b) * (a.T @ a), rhs)
        c, bad, res = _solve_update(sys)
        n_singular += bad
        residuals.append(res)
        a, b, c = _normalize([a, b, c])
        cost = coupled_cp_cost(hsi, msi, deg, CPModel(a, b, c), lam)
        costs.append(cost)
        if cost <= floor or abs(prev - cost) <= cfg.rel_tol * max(prev, 1e-300):
            break
    if n_singular:
        warnings.warn(f"{n_singular} singular STEREO update(s) solved in the minimum-norm sense", RankDeficientWarning, stacklevel=2)
    model = CPModel(a, b, c)
    return StereoResult(model, model.full(), tuple(costs), it, n_singular, tuple(residuals))


def hybrid(hsi, msi, pm: np.ndarray, f: int, r3: int, **als) -> np.ndarray:
    """CP of the MSI with its spectral factor mapped through the HSI spectral subspace."""
    hsi, msi = as_cube(hsi), as_cube(msi)
    pm = np.atleast_2d(np.asarray(pm, dtype=float))
    k_m, k = pm.shape
    if msi.shape[2] != k_m or hsi.shape[2] != k:
        raise ValueError(f"P_M of shape {pm.shape} does not match HSI {hsi.shape} / MSI {msi.shape}")
    if r3 > k_m:
        raise ValueError(f"R3={r3} must not exceed the number of MSI bands K_M={k_m}")
    fit = fit_cp(msi, f, **als)
    z = tsvd(unfold(hsi, 3), r3)
    pz = pm @ z
    if numerical_rank(pz, PINV_RTOL) < r3:
        warnings.warn(f"P_M Z is rank deficient (R3={r3})", RankDeficientWarning, stacklevel=2)
    c = z @ np.linalg.pinv(pz, rcond=PINV_RTOL) @ fit.model.c
    return CPModel(fit.model.a, fit.model.b, c).full()


def scuba(hsi, msi, pm: np.ndarray, f: int, r3: int, grid: BlockGrid, workers: int = 1, **als) -> np.ndarray:
    """:func:`hybrid` applied to matching spatial blocks."""
    hsi, msi = as_cube(hsi), as_cube(msi)
    return blockwise(hsi, msi, grid, lambda h, m: hybrid(h, m, pm, f, r3, **als), workers)
