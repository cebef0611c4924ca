"""Reconstruction quality metrics and region-mean signature extraction."""

from __future__ import annotations

import math
import time
import warnings
from contextlib import contextmanager
from dataclasses import asdict, dataclass

import numpy as np

from .synth import SignatureBank

__all__ = [
    "DegenerateInputWarning",
    "MetricsReport",
    "RSNR_CLAMP_DB",
    "cc",
    "ergas",
    "evaluate",
    "extract_signatures",
    "r_snr",
    "sam",
    "stopwatch",
]

RSNR_CLAMP_DB = 300.0


class DegenerateInputWarning(RuntimeWarning):
    """Some slices or fibers were skipped because they are constant or zero."""


def _pair(ref, est) -> tuple[np.ndarray, np.ndarray]:
    ref = np.asarray(ref, dtype=float)
    est = np.asarray(est, dtype=float)
    if ref.shape != est.shape or ref.ndim != 3:
        raise ValueError(f"reference {ref.shape} and estimate {est.shape} must be equal-shaped cubes")
    return ref, est


def r_snr(ref, est) -> float:
    """``10 log10(||Y||^2 / ||Y_hat - Y||^2)`` in dB, capped at 300 dB."""
    ref, est = _pair(ref, est)
    num = float(np.sum(ref**2))
    if num == 0:
        raise ValueError("reference cube is zero")
    den = float(np.sum((est - ref) ** 2))
    if den == 0:
        return RSNR_CLAMP_DB
    return min(10.0 * math.log10(num / den), RSNR_CLAMP_DB)


def cc(ref, est) -> float:
    """Mean over spectral slices of the Pearson correlation of ``ref`` and ``est``.

    Slices where either image is constant are skipped with a warning.
    """
    ref, est = _pair(ref, est)
    k = ref.shape[2]
    a = ref.reshape(-1, k, order="F")
    b = est.reshape(-1, k, order="F")
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    ok = (na > 0) & (nb > 0)
    if not ok.any():
        raise ValueError("every spectral slice is constant")
    if not ok.all():
        warnings.warn(f"{int((~ok).sum())} constant slice(s) skipped", DegenerateInputWarning, stacklevel=2)
    rho = np.sum(a[:, ok] * b[:, ok], axis=0) / (na[ok] * nb[ok])
    return float(np.mean(rho))


def sam(ref, est) -> float:
    """Mean spectral angle in degrees; zero fibers are skipped with a warning."""
    ref, est = _pair(ref, est)
    k = ref.shape[2]
    a = ref.reshape(-1, k)
    b = est.reshape(-1, k)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    ok = (na > 0) & (nb > 0)
    if not ok.any():
        raise ValueError("every spectral fiber is zero")
    if not ok.all():
        warnings.warn(f"{int((~ok).sum())} zero fiber(s) skipped", DegenerateInputWarning, stacklevel=2)
    # 2 atan2(|a^ - b^|, |a^ + b^|) equals arccos(a^ . b^) but stays exact near 0 and 180 degrees.
    ua = a[ok] / na[ok, None]
    ub = b[ok] / nb[ok, None]
    ang = 2.0 * np.arctan2(np.linalg.norm(ua - ub, axis=1), np.linalg.norm(ua + ub, axis=1))
    return float(np.degrees(np.mean(ang)))


def ergas(ref, est, d: int) -> float:
    """``(100/d) sqrt(1/(IJK) sum_k ||Y_hat_k - Y_k||^2 / mu_k^2)``, ``mu_k`` the estimate's slice mean."""
    ref, est = _pair(ref, est)
    if d <= 0:
        raise ValueError(f"ratio d must be positive, got {d}")
    i, j, k = ref.shape
    mu = est.mean(axis=(0, 1))
    if np.any(mu == 0):
        raise ValueError(f"{int(np.sum(mu == 0))} estimated slice(s) have zero mean")
    err = np.sum((est - ref) ** 2, axis=(0, 1))
    return float(100.0 / d * math.sqrt(np.sum(err / mu**2) / (i * j * k)))


def extract_signatures(sri, labels) -> SignatureBank:
    """Mean spectral fiber of each labelled region ``1..N``; label 0 is background."""
    sri = np.asarray(sri, dtype=float)
    labels = np.asarray(labels)
    if labels.shape != sri.shape[:2]:
        raise ValueError(f"label map {labels.shape} does not match image {sri.shape[:2]}")
    if labels.min() < 0:
        raise ValueError("labels must be non-negative")
    n = int(labels.max())
    if n == 0:
        raise ValueError("label map has no nonzero label")
    sig = np.zeros((sri.shape[2], n))
    empty = []
    for m in range(1, n + 1):
        mask = labels == m
        if mask.any():
            sig[:, m - 1] = sri[mask].mean(axis=0)
        else:
            empty.append(m)
    if empty:
        warnings.warn(f"labels {empty} have no pixels", DegenerateInputWarning, stacklevel=2)
        keep = [m - 1 for m in range(1, n + 1) if m not in empty]
        return SignatureBank(sig[:, keep], tuple(f"label_{m + 1}" for m in keep))
    return SignatureBank(sig, tuple(f"label_{m}" for m in range(1, n + 1)))


@dataclass(frozen=True)
class MetricsReport:
    r_snr: float
    cc: float
    sam: float
    ergas: float
    wall_time: float = float("nan")

    CSV_HEADER = ("method", "params", "r_snr", "cc", "sam", "ergas", "time_s")

    def csv_row(self, method: str, params: str) -> list[str]:
        vals = (self.r_snr, self.cc, self.sam, self.ergas, self.wall_time)
        return [method, params, *("" if math.isnan(x) else f"{x:.10g}" for x in vals)]

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(ref, est, d: int, wall_time: float = float("nan")) -> MetricsReport:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateInputWarning)
        return MetricsReport(r_snr(ref, est), cc(ref, est), sam(ref, est), ergas(ref, est, d), wall_time)


@contextmanager
def stopwatch():
    """Yields a one-element list that receives the elapsed wall time in seconds."""
    box = [float("nan")]
    t0 = time.perf_counter()
    try:
        yield box
    finally:
        box[0] = time.perf_counter() - t0
