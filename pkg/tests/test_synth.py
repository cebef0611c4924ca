import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupled_hsr.synth import (
    ParcelMap,
    SignatureBank,
    build_sri,
    builtin_scenario,
    cp_model,
    default_signatures,
    gaussian_blob,
    read_scenario,
    read_signatures,
    scenario_sri,
    write_signatures,
)
from coupled_hsr.tensor_core import unfold


def num_rank(m, rtol=1e-10):
    s = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(s > rtol * s[0]))


def test_blob_examples():
    assert gaussian_blob(1, 1, 3.0).tolist() == [[1.0]]
    h = gaussian_blob(3, 3, 1.0)
    e = math.exp
    expected = [[e(-1), e(-0.5), e(-1)], [e(-0.5), 1.0, e(-0.5)], [e(-1), e(-0.5), e(-1)]]
    np.testing.assert_allclose(h, expected, rtol=1e-15)


@given(st.integers(1, 12), st.integers(1, 12), st.floats(0.3, 10))
def test_blob_symmetry(h, w, sigma):
    b = gaussian_blob(h, w, sigma)
    np.testing.assert_array_equal(b, b[::-1, :])
    np.testing.assert_array_equal(b, b[:, ::-1])


def test_parcel_map_validation():
    with pytest.raises(ValueError):
        ParcelMap(np.zeros((2, 2), dtype=int))
    with pytest.raises(ValueError):
        ParcelMap(np.array([[1, 2, 3]]))
    with pytest.raises(ValueError):
        SignatureBank(np.zeros((4, 1)))


def test_builtin_maps():
    n2 = builtin_scenario("N2")
    assert n2.pmap.grid.tolist() == [[1, 2], [2, 0]] and n2.block == (60, 60) and n2.sigma == 20.0
    n7 = builtin_scenario("N7_ANTIDIAG")
    assert n7.pmap.grid[0].tolist() == [1, 2, 3, 4] and n7.pmap.grid[3].tolist() == [4, 5, 6, 7]
    assert n7.block == (20, 20)
    b6 = builtin_scenario("BLOCK_N6")
    assert b6.block == (10, 10) and b6.sigma == 4.0
    for n in range(1, 7):
        cells = np.argwhere(b6.pmap.grid == n).tolist()
        assert cells == [[2 * n - 2, 2 * n - 2], [2 * n - 1, 2 * n - 1]]
    assert np.count_nonzero(b6.pmap.grid) == 12


def test_build_matches_double_loop():
    pmap = ParcelMap(np.array([[1, 0, 2], [0, 2, 0], [3, 0, 1]]))
    bank = default_signatures(3, k=7)
    y = build_sri(pmap, bank, (4, 3), 1.5)
    blob = gaussian_blob(4, 3, 1.5)
    loop = np.zeros((12, 9, 7))
    for i in range(12):
        for j in range(9):
            mat = pmap.grid[i // 4, j // 3]
            if mat:
                for k in range(7):
                    loop[i, j, k] = blob[i % 4, j % 3] * bank.signatures[k, mat - 1]
    assert np.max(np.abs(y - loop)) <= 1e-13


def test_single_material_is_rank_one():
    bank = SignatureBank(np.array([[1.0], [2.0], [0.5]]))
    y = build_sri(ParcelMap(np.array([[1]])), bank, (5, 4), 2.0)
    np.testing.assert_allclose(y, np.multiply.outer(gaussian_blob(5, 4, 2.0), bank.signatures[:, 0]), rtol=1e-15)


def test_material_out_of_bank():
    with pytest.raises(ValueError):
        build_sri(ParcelMap(np.array([[3]])), default_signatures(2, 5), (2, 2), 1.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 2**16))
def test_build_linear_in_bank(alpha, beta, seed):
    rng = np.random.default_rng(seed)
    pmap = ParcelMap(np.array([[1, 2], [2, 1]]))
    s1, s2 = rng.random((5, 2)) + 0.1, rng.random((5, 2)) + 0.1
    mixed = alpha * s1 + beta * s2
    if np.any(np.linalg.norm(mixed, axis=0) == 0):
        return
    lhs = build_sri(pmap, SignatureBank(mixed), (3, 3), 1.0)
    rhs = alpha * build_sri(pmap, SignatureBank(s1), (3, 3), 1.0) + beta * build_sri(pmap, SignatureBank(s2), (3, 3), 1.0)
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_n2_multilinear_rank():
    y = scenario_sri("N2")
    assert y.shape == (120, 120, 200)
    for n in (1, 2, 3):
        s = np.linalg.svd(unfold(y, n), compute_uv=False)
        assert s[2] <= 1e-10 * s[1]


def test_block_n6_ranks_and_cp_form():
    sc = builtin_scenario("BLOCK_N6")
    bank = default_signatures(6)
    y = build_sri(sc.pmap, bank, sc.block, sc.sigma)
    assert [num_rank(unfold(y, n)) for n in (1, 2, 3)] == [12, 12, 6]
    model = cp_model(sc.pmap, bank, sc.block, sc.sigma)
    assert model.rank == 12
    assert np.linalg.norm(model.full() - y) <= 1e-13 * np.linalg.norm(y)


@pytest.mark.parametrize("name,bound", [("N2", (2, 2, 2)), ("N7_ANTIDIAG", (4, 4, 7)), ("BLOCK_N6", (12, 12, 6))])
def test_rank_bound(name, bound):
    y = scenario_sri(name)
    assert all(num_rank(unfold(y, n)) <= b for n, b in zip((1, 2, 3), bound))


def test_signature_csv_roundtrip(tmp_path):
    bank = SignatureBank(np.array([[0.1, 0.2], [0.3, 0.25], [0.5, 0.125]]), ("grass", "soil"))
    path = tmp_path / "sig.csv"
    write_signatures(bank, path)
    back = read_signatures(path)
    assert back.names == ("grass", "soil")
    np.testing.assert_array_equal(back.signatures, bank.signatures)


def test_scenario_file(tmp_path):
    path = tmp_path / "sc.ini"
    path.write_text("[scenario]\nmap = 1 2; 2 0\nblock = 6x6\nsigma = 2\n")
    sc = read_scenario(path)
    assert sc.pmap.grid.tolist() == [[1, 2], [2, 0]] and sc.block == (6, 6) and sc.sigma == 2.0
