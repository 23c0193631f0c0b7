"""Geometric scale grids discretizing the multiplicative measure dt/t."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)


@dataclass(frozen=True)
class TGrid:
    """Geometric grid t_k = delta * 2^(k/q) truncated at R.

    ``q`` is the node count per octave; the log-weight of every node is
    ln(2)/q, which makes the discrete sum an exact trapezoid rule for dt/t
    on the doubly infinite lattice.
    """

    delta: float
    R: float
    q: int

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.R > self.delta:
            raise ValueError("R must exceed delta")
        if self.q < 1:
            raise ValueError("q must be a positive integer")

    @property
    def nodes(self) -> np.ndarray:
        n_steps = int(math.ceil(self.q * math.log2(self.R / self.delta)))
        return self.delta * 2.0 ** (np.arange(n_steps + 1) / self.q)

    @property
    def dlog(self) -> float:
        return LN2 / self.q

    @property
    def size(self) -> int:
        return self.nodes.size

    def refined(self, factor: int = 2) -> "TGrid":
        return TGrid(self.delta, self.R, self.q * factor)

    def widened(self, octaves_low: float = 1.0, octaves_high: float = 1.0) -> "TGrid":
        return TGrid(self.delta * 2.0 ** (-octaves_low),
                     self.R * 2.0 ** octaves_high, self.q)

    def descriptor(self) -> dict:
        return {"delta": self.delta, "R": self.R, "q": self.q}


def covering_tgrid(op, q: int = 16, lo: float = 1e-3, hi: float = 1e3,
                   power: float | None = None) -> TGrid:
    """Grid wide enough that t^power * lambda sweeps [lo, hi] over the
    operator's nonzero spectrum.

    ``power`` defaults to the operator's homogeneity order; pass 1 for
    families parametrized directly in t.
    """
    if power is None:
        power = float(op.order_2m)
    s_lo, s_hi = op.spectral_bounds()
    delta = (lo / s_hi) ** (1.0 / power)
    r_top = (hi / s_lo) ** (1.0 / power)
    return TGrid(delta, r_top, q)
