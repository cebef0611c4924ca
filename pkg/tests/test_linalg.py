import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupled_hsr.linalg import (
    SingularOperator,
    SylvesterSystem,
    hosvd,
    kron_sum_spectrum,
    numerical_rank,
    solve_sylvester,
    sylvester_residual,
    tsvd,
)
from coupled_hsr.tensor_core import TuckerModel


def spd(rng, n, shift=0.1):
    x = rng.standard_normal((n, n))
    return x @ x.T + shift * np.eye(n)


def psd(rng, n, rank=None):
    x = rng.standard_normal((n, rank or n))
    return x @ x.T


def dense_solve(sys):
    vec_g = np.linalg.solve(sys.dense_operator(), sys.e.reshape(-1, order="F"))
    return vec_g.reshape(sys.shape, order="F")


def projector(q):
    return q @ q.T


# ---- tsvd


def test_tsvd_identity_subspace():
    q = tsvd(np.eye(3), 2)
    assert q.shape == (3, 2)
    np.testing.assert_allclose(q.T @ q, np.eye(2), atol=1e-12)


def test_tsvd_sign_convention():
    m = np.vstack([np.diag([3.0, 2.0, 1.0]), np.zeros((1, 3))])
    np.testing.assert_array_equal(tsvd(m, 1)[:, 0], [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(tsvd(-m, 1)[:, 0], [1.0, 0.0, 0.0])


def test_tsvd_row_space_projector():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((20, 5)) @ rng.standard_normal((5, 8))
    _, _, vt = np.linalg.svd(m)
    ref = projector(vt[:5].T)
    assert np.linalg.norm(projector(tsvd(m, 5)) - ref) <= 1e-10


def test_tsvd_rank_out_of_range():
    with pytest.raises(ValueError):
        tsvd(np.ones((3, 2)), 3)
    with pytest.raises(ValueError):
        tsvd(np.ones((3, 2)), 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(1, 12), st.data())
def test_tsvd_orthonormal(rows, cols, data):
    r = data.draw(st.integers(1, min(rows, cols)))
    m = np.random.default_rng(rows * 100 + cols).standard_normal((rows, cols))
    q = tsvd(m, r)
    assert np.linalg.norm(q.T @ q - np.eye(r)) <= 1e-10
    idx = np.argmax(np.abs(q), axis=0)
    assert np.all(q[idx, np.arange(r)] > 0)


def test_tall_input_uses_same_subspace():
    rng = np.random.default_rng(1)
    m = rng.standard_normal((200, 6))
    _, _, vt = np.linalg.svd(m, full_matrices=False)
    assert np.linalg.norm(projector(tsvd(m, 3)) - projector(vt[:3].T)) <= 1e-10


def test_numerical_rank():
    rng = np.random.default_rng(2)
    assert numerical_rank(rng.standard_normal((10, 3)) @ rng.standard_normal((3, 7))) == 3
    assert numerical_rank(np.zeros((3, 3))) == 0


# ---- hosvd


def test_hosvd_recovers_low_multilinear_rank():
    rng = np.random.default_rng(3)
    t = TuckerModel(rng.standard_normal((2, 2, 2)), *(rng.standard_normal((n, 2)) for n in (5, 6, 7))).full()
    m = hosvd(t, (2, 2, 2))
    assert np.linalg.norm(m.full() - t) <= 1e-10 * np.linalg.norm(t)


def test_hosvd_full_rank_exact_and_zero_cube():
    t = np.random.default_rng(4).standard_normal((3, 4, 5))
    assert np.linalg.norm(hosvd(t, t.shape).full() - t) <= 1e-12 * np.linalg.norm(t)
    z = hosvd(np.zeros((3, 4, 5)), (2, 2, 2))
    assert not z.core.any() and not z.full().any()
    with pytest.raises(ValueError):
        hosvd(t, (4, 1, 1))


# ---- solve_sylvester


def test_sylvester_trivial_cases():
    e = np.random.default_rng(5).standard_normal((3, 2))
    z2, z3 = np.zeros((2, 2)), np.zeros((3, 3))
    np.testing.assert_allclose(solve_sylvester(SylvesterSystem(np.eye(3), np.eye(2), z3, z2, e)), e, atol=1e-15)
    np.testing.assert_allclose(solve_sylvester(SylvesterSystem(np.eye(3), z2, np.eye(3), np.eye(2), e)), e, atol=1e-15)


def test_sylvester_spd_against_dense():
    rng = np.random.default_rng(6)
    sys = SylvesterSystem(spd(rng, 6), np.eye(4), np.eye(6), spd(rng, 4), rng.standard_normal((6, 4)))
    g = solve_sylvester(sys)
    ref = dense_solve(sys)
    assert np.linalg.norm(g - ref) <= 1e-10 * np.linalg.norm(ref)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(1, 6), st.integers(0, 2**16))
def test_sylvester_general_path_residual(m, n, seed):
    rng = np.random.default_rng(seed)
    # Nonsymmetric, well-conditioned operators exercise the QZ path.
    a = rng.standard_normal((m, m)) + m * np.eye(m)
    b = rng.standard_normal((n, n)) + n * np.eye(n)
    c = rng.standard_normal((m, m)) * 0.1
    d = rng.standard_normal((n, n)) * 0.1
    sys = SylvesterSystem(a, b, c, d, rng.standard_normal((m, n)))
    g = solve_sylvester(sys)
    assert sylvester_residual(sys, g) <= 1e-10
    ref = dense_solve(sys)
    assert np.linalg.norm(g - ref) <= 1e-9 * np.linalg.norm(ref)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**16))
def test_sylvester_kronecker_structured_paths(r1, r2, r3, seed):
    # Both matricizations of the same normal equations give the same core.
    rng = np.random.default_rng(seed)
    au, av, dw = spd(rng, r1), spd(rng, r2), spd(rng, r3)
    rhs = rng.standard_normal((r1, r2, r3))
    e1 = rhs.reshape(r1 * r2, r3, order="F")
    g1 = solve_sylvester(SylvesterSystem(np.kron(av, au), np.eye(r3), np.eye(r1 * r2), dw, e1))
    e2 = np.moveaxis(rhs, 0, -1).reshape(-1, r1, order="F").T
    g2 = solve_sylvester(SylvesterSystem(au, np.kron(np.eye(r3), av), np.eye(r1), np.kron(dw, np.eye(r2)), e2))
    core1 = g1.reshape(r1, r2, r3, order="F")
    core2 = np.moveaxis(g2.T.reshape(r2, r3, r1, order="F"), -1, 0)
    assert np.linalg.norm(core1 - core2) <= 1e-9 * np.linalg.norm(core1)


def test_sylvester_singular_raises_and_min_norm():
    rng = np.random.default_rng(7)
    a = psd(rng, 5, rank=3)
    d = psd(rng, 3, rank=2)
    sys = SylvesterSystem(a, np.eye(3), np.eye(5), d, rng.standard_normal((5, 3)))
    with pytest.raises(SingularOperator) as info:
        solve_sylvester(sys)
    assert info.value.smallest <= 1e-12 * info.value.largest
    g = solve_sylvester(sys, min_norm=True)
    ref = np.linalg.lstsq(sys.dense_operator(), sys.e.reshape(-1, order="F"), rcond=1e-12)[0]
    np.testing.assert_allclose(g.reshape(-1, order="F"), ref, atol=1e-8 * np.linalg.norm(ref))


def test_sylvester_general_singular_raises():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    sys = SylvesterSystem(a, np.eye(2), np.zeros((2, 2)), np.eye(2), np.ones((2, 2)))
    with pytest.raises(SingularOperator):
        solve_sylvester(sys)


def test_sylvester_shape_validation():
    with pytest.raises(ValueError):
        SylvesterSystem(np.eye(2), np.eye(3), np.eye(2), np.eye(2), np.zeros((2, 3)))


# ---- kron_sum_spectrum


def test_spectrum_examples():
    rep = kron_sum_spectrum(np.eye(4), np.eye(2))
    assert (rep.sigma_max, rep.sigma_min, rep.cond) == (2.0, 2.0, 1.0)
    rep = kron_sum_spectrum(np.diag([1.0, 2.0]), np.diag([10.0]))
    assert (rep.sigma_max, rep.sigma_min) == (12.0, 11.0)
    assert kron_sum_spectrum(np.zeros((2, 2)), np.zeros((1, 1))).singular


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 36), st.integers(1, 8), st.booleans(), st.integers(0, 2**16))
def test_spectrum_matches_explicit(m, n, factored, seed):
    rng = np.random.default_rng(seed)
    d = spd(rng, n)
    if factored and m % 2 == 0:
        f1, f2 = spd(rng, m // 2), spd(rng, 2)
        a, a_arg = np.kron(f1, f2), [f1, f2]
    else:
        a = spd(rng, m)
        a_arg = a
    ev = np.linalg.eigvalsh(np.kron(np.eye(n), a) + np.kron(d, np.eye(m)))
    rep = kron_sum_spectrum(a_arg, d)
    assert abs(rep.sigma_max - ev[-1]) <= 1e-8 * ev[-1]
    assert abs(rep.sigma_min - ev[0]) <= 1e-8 * ev[-1]
    assert abs(rep.cond - ev[-1] / ev[0]) <= 1e-8 * (ev[-1] / ev[0])
