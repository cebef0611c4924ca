import numpy as np

from coupled_hsr.tensor_core import TuckerModel


def rel_err(est, ref) -> float:
    return float(np.linalg.norm(np.asarray(est) - np.asarray(ref)) / np.linalg.norm(ref))


def orthonormal(rng, n, r):
    q, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return q


def random_tucker(seed, dims, ranks) -> TuckerModel:
    """Random core with orthonormal factors."""
    rng = np.random.default_rng(seed)
    core = rng.standard_normal(ranks)
    return TuckerModel(core, *(orthonormal(rng, n, r) for n, r in zip(dims, ranks)))
