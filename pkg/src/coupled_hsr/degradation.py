"""Spatial and spectral degradation operators (Wald protocol) and noise injection.

``P1 = S1 @ T1`` blurs each column with a truncated Gaussian kernel and keeps
every ``d``-th row starting at (1-based) row 2.  ``P_M`` averages groups of
SRI bands into MSI bands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .tensor_core import as_cube, mode_contract

__all__ = [
    "DegradationSet",
    "Sensor",
    "SensorSpec",
    "HSI_SPAN_NM",
    "SENSOR_WINDOWS_NM",
    "add_noise",
    "blur_matrix",
    "degrade",
    "downsample_matrix",
    "gaussian_kernel",
    "hsi_size",
    "make_degradation",
    "sensor_spec",
    "spectral_response",
]


class Sensor(str, Enum):
    LANDSAT = "LANDSAT"
    QUICKBIRD = "QUICKBIRD"
    PAN = "PAN"
    CUSTOM = "CUSTOM"


# Wavelength windows in nm, half-open [lo, hi).  QuickBird's published windows
# overlap; each window starts where the previous one ends so supports stay disjoint.
SENSOR_WINDOWS_NM = {
    Sensor.LANDSAT: [(450, 520), (520, 600), (630, 690), (760, 900), (1550, 1750), (2050, 2350)],
    Sensor.QUICKBIRD: [(430, 545), (545, 620), (620, 710), (715, 918)],
}

# Spectral span of the HSI paired with each sensor.
HSI_SPAN_NM = {
    Sensor.LANDSAT: (400.0, 2500.0),
    Sensor.QUICKBIRD: (430.0, 860.0),
}


def gaussian_kernel(q: int, sigma: float) -> np.ndarray:
    """Unnormalized sampled Gaussian ``phi(m)``, ``m = 1..q``, centred at ``ceil(q/2)``."""
    q = int(q)
    if q < 1 or q % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {q}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    c = math.ceil(q / 2)
    norm = math.sqrt(2.0 * math.pi * sigma**2)
    # Scalar libm exp keeps entries bit-identical to the per-entry formula; q is tiny.
    return np.array([math.exp(-((m - c) ** 2) / (2.0 * sigma**2)) / norm for m in range(1, q + 1)])


def blur_matrix(i_dim: int, q: int, sigma: float) -> np.ndarray:
    """Banded Toeplitz blur ``T1`` with ``T1[i, j] = phi(c + j - i)``, ``c = ceil(q/2)``.

    Rows and columns near the border are truncated, not renormalized.
    """
    if q > i_dim:
        raise ValueError(f"kernel size {q} exceeds dimension {i_dim}")
    phi = gaussian_kernel(q, sigma)
    c = math.ceil(q / 2)
    t = np.zeros((i_dim, i_dim))
    for off in range(-(c - 1), q - c + 1):
        # off = j - i, kernel index (1-based) c + off
        t += np.diag(np.full(i_dim - abs(off), phi[c + off - 1]), k=off)
    return t


def hsi_size(i_dim: int, d: int) -> int:
    """Largest ``i_h`` with ``2 + (i_h - 1) * d <= i_dim``."""
    if i_dim < 2:
        raise ValueError(f"dimension {i_dim} too small to downsample")
    return (i_dim - 2) // d + 1


def downsample_matrix(i_h: int, i_dim: int, d: int) -> np.ndarray:
    """Selection matrix with ``S[i, 2 + (i - 1) d] = 1`` (1-based)."""
    if i_h < 1 or d < 1:
        raise ValueError("i_h and d must be positive")
    last = 2 + (i_h - 1) * d
    if last > i_dim:
        raise ValueError(f"row {i_h} would select column {last} > {i_dim}")
    s = np.zeros((i_h, i_dim))
    s[np.arange(i_h), 1 + np.arange(i_h) * d] = 1.0
    return s


@dataclass(frozen=True)
class SensorSpec:
    """Inclusive 1-based band ranges, one per MSI band."""

    band_ranges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "band_ranges", tuple((int(a), int(b)) for a, b in self.band_ranges))
        if not self.band_ranges:
            raise ValueError("sensor needs at least one band range")
        for lo, hi in self.band_ranges:
            if lo < 1 or hi < lo:
                raise ValueError(f"invalid band range {(lo, hi)}")
        ordered = sorted(self.band_ranges)
        for (_, hi), (lo, _) in zip(ordered, ordered[1:]):
            if lo <= hi:
                raise ValueError(f"band ranges overlap: {ordered}")

    @property
    def k_m(self) -> int:
        return len(self.band_ranges)


def spectral_response(spec: SensorSpec, k: int) -> np.ndarray:
    """Selection-averaging matrix: row ``r`` is ``1/|range_r|`` on its bands."""
    pm = np.zeros((spec.k_m, k))
    for r, (lo, hi) in enumerate(spec.band_ranges):
        if hi > k:
            raise ValueError(f"band range {(lo, hi)} exceeds {k} bands")
        pm[r, lo - 1 : hi] = 1.0 / (hi - lo + 1)
    return pm


def sensor_spec(
    sensor: Sensor | str,
    k: int,
    k_m: int | None = None,
    wavelengths: tuple[float, float] | None = None,
) -> SensorSpec:
    """Band ranges of a named sensor for ``k`` SRI bands.

    LANDSAT and QUICKBIRD map their wavelength windows onto ``k`` bands with
    centres spread uniformly over ``wavelengths``, by default the HSI span
    paired with the sensor (approximate: real band positions are dataset
    metadata).  PAN averages all bands; CUSTOM splits the
    bands into ``k_m`` contiguous groups of near-equal size.
    """
    sensor = Sensor(sensor.upper() if isinstance(sensor, str) else sensor)
    if sensor is Sensor.PAN:
        return SensorSpec(((1, k),))
    if sensor is Sensor.CUSTOM:
        if k_m is None or not 1 <= k_m <= k:
            raise ValueError(f"CUSTOM sensor needs 1 <= k_m <= {k}, got {k_m}")
        edges = np.linspace(0, k, k_m + 1).round().astype(int)
        return SensorSpec(tuple((int(a) + 1, int(b)) for a, b in zip(edges[:-1], edges[1:])))
    lo_nm, hi_nm = wavelengths or HSI_SPAN_NM[sensor]
    centres = lo_nm + (np.arange(k) + 0.5) * (hi_nm - lo_nm) / k
    ranges = []
    for w_lo, w_hi in SENSOR_WINDOWS_NM[sensor]:
        idx = np.flatnonzero((centres >= w_lo) & (centres < w_hi))
        if idx.size == 0:
            raise ValueError(f"{sensor.value} window {w_lo}-{w_hi} nm contains none of the {k} bands")
        ranges.append((int(idx[0]) + 1, int(idx[-1]) + 1))
    return SensorSpec(tuple(ranges))


def _check_full_row_rank(name: str, m: np.ndarray) -> None:
    s = np.linalg.svd(m, compute_uv=False)
    if s.size < m.shape[0] or s[-1] <= 1e-10:
        raise ValueError(f"{name} is not of full row rank (smallest singular value {s[-1] if s.size else 0:.3e})")


@dataclass(frozen=True)
class DegradationSet:
    """Degradation matrices with the parameters that produced them."""

    p1: np.ndarray
    p2: np.ndarray
    pm: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def hsi_shape(self) -> tuple[int, int]:
        return (self.p1.shape[0], self.p2.shape[0])

    @property
    def sri_shape(self) -> tuple[int, int, int]:
        return (self.p1.shape[1], self.p2.shape[1], self.pm.shape[1])

    @property
    def k_m(self) -> int:
        return self.pm.shape[0]

    def validate(self) -> None:
        for name, m in (("P1", self.p1), ("P2", self.p2), ("P_M", self.pm)):
            _check_full_row_rank(name, m)


def make_degradation(
    dims: Sequence[int],
    d: int = 4,
    q: int = 9,
    sigma_blur: float = 2.0,
    sensor: Sensor | str = Sensor.LANDSAT,
    k_m: int | None = None,
    band_ranges: Sequence[tuple[int, int]] | None = None,
    wavelengths: tuple[float, float] | None = None,
) -> DegradationSet:
    """Wald-protocol ``P1, P2`` plus a sensor ``P_M`` for an SRI of shape ``dims``."""
    i, j, k = (int(x) for x in dims)
    p1 = downsample_matrix(hsi_size(i, d), i, d) @ blur_matrix(i, q, sigma_blur)
    p2 = downsample_matrix(hsi_size(j, d), j, d) @ blur_matrix(j, q, sigma_blur)
    sensor = Sensor(sensor.upper() if isinstance(sensor, str) else sensor)
    if band_ranges is not None:
        spec = SensorSpec(tuple(band_ranges))
        sensor = Sensor.CUSTOM
    else:
        spec = sensor_spec(sensor, k, k_m=k_m, wavelengths=wavelengths)
    pm = spectral_response(spec, k)
    deg = DegradationSet(
        p1,
        p2,
        pm,
        {
            "d": int(d),
            "q": int(q),
            "sigma_blur": float(sigma_blur),
            "sensor": sensor.value,
            "band_ranges": [list(r) for r in spec.band_ranges],
        },
    )
    deg.validate()
    return deg


def degrade(sri: np.ndarray, deg: DegradationSet) -> tuple[np.ndarray, np.ndarray]:
    """Noiseless ``(hsi, msi) = (Y x_1 P1 x_2 P2, Y x_3 P_M)``."""
    sri = as_cube(sri)
    if sri.shape != deg.sri_shape:
        raise ValueError(f"SRI shape {sri.shape} does not match degradation {deg.sri_shape}")
    hsi = mode_contract(mode_contract(sri, deg.p1, 1), deg.p2, 2)
    msi = mode_contract(sri, deg.pm, 3)
    return hsi, msi


def add_noise(t: np.ndarray, snr_db: float, seed: int | np.random.Generator | None) -> np.ndarray:
    """Add white Gaussian noise scaled so that ``10 log10(||t||^2 / ||E||^2) == snr_db``."""
    t = np.asarray(t, dtype=float)
    if math.isinf(snr_db) and snr_db > 0:
        return t.copy()
    norm_t = np.linalg.norm(t)
    if norm_t == 0:
        raise ValueError("cannot set an SNR relative to a zero cube")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    e = rng.standard_normal(t.shape)
    e *= norm_t / np.linalg.norm(e) * 10.0 ** (-snr_db / 20.0)
    return t + e
