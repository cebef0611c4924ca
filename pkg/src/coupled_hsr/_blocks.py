from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class BlockGrid:
    """Number of spatial blocks along the two image axes."""

    b1: int = 1
    b2: int = 1

    def __post_init__(self):
        if self.b1 < 1 or self.b2 < 1:
            raise ValueError(f"block counts must be positive, got {(self.b1, self.b2)}")

    @classmethod
    def parse(cls, text: str) -> "BlockGrid":
        """Parse ``"B1xB2"``."""
        try:
            b1, b2 = (int(x) for x in text.lower().split("x"))
        except ValueError:
            raise ValueError(f"block grid must look like 2x2, got {text!r}") from None
        return cls(b1, b2)

    def check(self, msi_shape, hsi_shape) -> None:
        i, j = msi_shape[:2]
        i_h, j_h = hsi_shape[:2]
        for name, n in (("I", i), ("I_H", i_h)):
            if n % self.b1:
                raise ValueError(f"{name}={n} is not divisible by b1={self.b1}")
        for name, n in (("J", j), ("J_H", j_h)):
            if n % self.b2:
                raise ValueError(f"{name}={n} is not divisible by b2={self.b2}")


class BlockError(RuntimeError):
    """A per-block failure; ``block`` holds the 0-based block coordinates."""

    def __init__(self, block: tuple[int, int], cause: Exception):
        super().__init__(f"block {block}: {cause}")
        self.block = block
        self.cause = cause


def blockwise(
    hsi: np.ndarray,
    msi: np.ndarray,
    grid: BlockGrid,
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    workers: int = 1,
) -> np.ndarray:
    """Apply ``fn(hsi_block, msi_block)`` on matching spatial blocks and reassemble."""
    grid.check(msi.shape, hsi.shape)
    i, j = msi.shape[:2]
    i_h, j_h = hsi.shape[:2]
    si, sj, sih, sjh = i // grid.b1, j // grid.b2, i_h // grid.b1, j_h // grid.b2
    k = hsi.shape[2]
    out = np.empty((i, j, k))

    def run(block):
        a, b = block
        try:
            res = fn(hsi[a * sih : (a + 1) * sih, b * sjh : (b + 1) * sjh], msi[a * si : (a + 1) * si, b * sj : (b + 1) * sj])
        except Exception as exc:
            raise BlockError(block, exc) from exc
        out[a * si : (a + 1) * si, b * sj : (b + 1) * sj] = res

    blocks = list(product(range(grid.b1), range(grid.b2)))
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for fut in [pool.submit(run, blk) for blk in blocks]:
                fut.result()
    else:
        for blk in blocks:
            run(blk)
    return out
