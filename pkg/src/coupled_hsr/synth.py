"""Synthetic SRIs built from parcel maps: each material's abundance is a block
matrix carrying Gaussian bumps on the cells it occupies, and the cube is the
sum of abundance-times-signature outer products."""

from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .tensor_core import CPModel

__all__ = [
    "ParcelMap",
    "Scenario",
    "ScenarioName",
    "SignatureBank",
    "build_sri",
    "builtin_scenario",
    "cp_model",
    "default_signatures",
    "gaussian_blob",
    "read_scenario",
    "read_signatures",
    "scenario_sri",
    "write_signatures",
]


def gaussian_blob(h: int, w: int, sigma: float) -> np.ndarray:
    """Unnormalized Gaussian bump centred at ``((h+1)/2, (w+1)/2)`` (1-based)."""
    if h < 1 or w < 1:
        raise ValueError(f"blob size must be positive, got {(h, w)}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    di = np.arange(1, h + 1) - (h + 1) / 2
    dj = np.arange(1, w + 1) - (w + 1) / 2
    return np.exp(-(di[:, None] ** 2 + dj[None, :] ** 2) / (2.0 * sigma**2))


@dataclass(frozen=True)
class ParcelMap:
    """Square grid of material indices; 0 marks an empty cell."""

    grid: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError(f"parcel map must be square, got shape {g.shape}")
        if not np.issubdtype(g.dtype, np.integer):
            if not np.all(g == np.round(g)):
                raise ValueError("parcel map entries must be integers")
            g = g.astype(int)
        if g.min() < 0:
            raise ValueError("material indices must be non-negative")
        if not g.any():
            raise ValueError("parcel map has no material")
        g = g.copy()
        g.flags.writeable = False
        object.__setattr__(self, "grid", g)

    @property
    def n_materials(self) -> int:
        return int(self.grid.max())


@dataclass(frozen=True)
class SignatureBank:
    """Spectral signatures stored as the columns of a ``K x N`` matrix."""

    signatures: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.signatures, dtype=float))
        if np.any(np.linalg.norm(s, axis=0) == 0):
            raise ValueError("signatures must be nonzero")
        names = tuple(self.names) or tuple(f"material_{n + 1}" for n in range(s.shape[1]))
        if len(names) != s.shape[1]:
            raise ValueError(f"{len(names)} names for {s.shape[1]} signatures")
        object.__setattr__(self, "signatures", s)
        object.__setattr__(self, "names", names)

    @property
    def k(self) -> int:
        return self.signatures.shape[0]

    @property
    def n(self) -> int:
        return self.signatures.shape[1]


def abundances(pmap: ParcelMap, block: tuple[int, int], sigma: float, n: int | None = None) -> np.ndarray:
    """Abundance maps as an ``(I, J, N)`` array."""
    bh, bw = block
    n = pmap.n_materials if n is None else n
    blob = gaussian_blob(bh, bw, sigma)
    m = pmap.grid.shape[0]
    out = np.zeros((m * bh, m * bw, n))
    for (r, c), mat in np.ndenumerate(pmap.grid):
        if mat:
            out[r * bh : (r + 1) * bh, c * bw : (c + 1) * bw, mat - 1] = blob
    return out


def build_sri(pmap: ParcelMap, bank: SignatureBank, block: tuple[int, int], sigma: float) -> np.ndarray:
    """``Y = sum_n A_n outer s_n`` of shape ``(M bh, M bw, K)``."""
    if pmap.n_materials > bank.n:
        raise ValueError(f"map uses material {pmap.n_materials} but the bank has {bank.n} signatures")
    a = abundances(pmap, block, sigma, bank.n)
    return np.asfortranarray(a @ bank.signatures.T)


class ScenarioName(str, Enum):
    N2 = "N2"
    N7_ANTIDIAG = "N7_ANTIDIAG"
    BLOCK_N6 = "BLOCK_N6"


@dataclass(frozen=True)
class Scenario:
    pmap: ParcelMap
    block: tuple[int, int]
    sigma: float


def _block_n6_map() -> np.ndarray:
    g = np.zeros((12, 12), dtype=int)
    for n in range(1, 7):
        g[2 * n - 2, 2 * n - 2] = n
        g[2 * n - 1, 2 * n - 1] = n
    return g


def builtin_scenario(name: ScenarioName | str) -> Scenario:
    """The three built-in parcel layouts."""
    name = ScenarioName(name)
    if name is ScenarioName.N2:
        return Scenario(ParcelMap(np.array([[1, 2], [2, 0]])), (60, 60), 20.0)
    if name is ScenarioName.N7_ANTIDIAG:
        grid = np.add.outer(np.arange(4), np.arange(4)) + 1
        return Scenario(ParcelMap(grid), (20, 20), 20 / 3)
    return Scenario(ParcelMap(_block_n6_map()), (10, 10), 4.0)


def default_signatures(n: int, k: int = 200) -> SignatureBank:
    """Deterministic smooth positive stand-ins for measured reflectance spectra.

    Signature ``n`` is a constant floor plus two Gaussian absorption-like
    bumps at material-dependent positions; distinct materials are linearly
    independent for ``k >= n``.
    """
    x = np.linspace(0.0, 1.0, k)
    cols = []
    for m in range(n):
        c1 = (m + 0.5) / n
        c2 = (0.37 + 0.61 * m / max(n, 1)) % 1.0
        cols.append(0.2 + 0.6 * np.exp(-((x - c1) ** 2) / 0.02) + 0.3 * np.exp(-((x - c2) ** 2) / 0.005) + 0.05 * m * x)
    return SignatureBank(np.column_stack(cols))


def cp_model(pmap: ParcelMap, bank: SignatureBank, block: tuple[int, int], sigma: float) -> CPModel:
    """Exact CP form of :func:`build_sri`: one rank-one term per occupied cell.

    The blob is separable, ``exp(-(a^2+b^2)/2s^2) = exp(-a^2/2s^2) exp(-b^2/2s^2)``.
    """
    bh, bw = block
    m = pmap.grid.shape[0]
    gi = gaussian_blob(bh, 1, sigma)[:, 0]
    gj = gaussian_blob(1, bw, sigma)[0]
    cells = [(r, c, mat) for (r, c), mat in np.ndenumerate(pmap.grid) if mat]
    a = np.zeros((m * bh, len(cells)))
    b = np.zeros((m * bw, len(cells)))
    for f, (r, c, _) in enumerate(cells):
        a[r * bh : (r + 1) * bh, f] = gi
        b[c * bw : (c + 1) * bw, f] = gj
    c = bank.signatures[:, [mat - 1 for _, _, mat in cells]]
    return CPModel(a, b, c)


def scenario_sri(name: ScenarioName | str, k: int = 200, bank: SignatureBank | None = None) -> np.ndarray:
    sc = builtin_scenario(name)
    bank = bank or default_signatures(sc.pmap.n_materials, k)
    return build_sri(sc.pmap, bank, sc.block, sc.sigma)


def read_signatures(path: str | Path) -> SignatureBank:
    """CSV with one signature per column and the material names as header."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: need a header and at least one band")
    try:
        data = np.array([[float(x) for x in row] for row in rows[1:] if row], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    return SignatureBank(data, tuple(rows[0]))


def write_signatures(bank: SignatureBank, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(bank.names)
        w.writerows(bank.signatures.tolist())


def read_scenario(path: str | Path) -> Scenario:
    """Read a custom scenario from an INI-style key-value file.

    ::

        [scenario]
        map = 1 2; 2 0
        block = 60x60
        sigma = 20
    """
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    sec = cp["scenario"]
    grid = np.array([[int(x) for x in row.split()] for row in sec["map"].split(";")])
    bh, bw = (int(x) for x in sec.get("block", "10x10").lower().split("x"))
    return Scenario(ParcelMap(grid), (bh, bw), sec.getfloat("sigma", bh / 3))
