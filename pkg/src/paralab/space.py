"""Finite weighted metric point sets with doubling geometry.

A space here is a finite set of points carrying a metric (full pairwise
distance matrix) and strictly positive weights, standing in for a metric
measure space with a doubling measure.  Grid constructors cover the two
topologies used throughout: periodic grids (translation invariant, constants
conserved) and bounded grids (boundary effects, trivial kernel downstream).

Balls are open: ``B(x, r) = {y : d(x, y) < r}``.  Annuli are the half-open
dyadic shells ``S_j(B) = 2^j B \\ 2^{j-1} B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class SpaceError(ValueError):
    """Invalid space construction or query."""


@dataclass(frozen=True)
class Ball:
    """Open ball given by a center index and a positive radius."""

    center: int
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise SpaceError(f"ball radius must be positive, got {self.radius}")


@dataclass
class DoublingReport:
    """Measured doubling constants: V(x,2r) <= A1 V(x,r), V(x,lr) <= A2 l^n V(x,r)."""

    A1: float
    A2: float
    n: float
    zero_variance: bool = False


class MetricMeasureSpace:
    """Finite metric measure space backed by a dense distance matrix.

    Parameters
    ----------
    distances : (N, N) array
        Symmetric, nonnegative, zero diagonal.
    weights : (N,) array
        Strictly positive point measures.
    topology : str
        ``"periodic"`` or ``"bounded"``.
    ambient_dim : int
        Dimension hint used by doubling diagnostics and grid descriptors.
    descriptor : dict, optional
        Serializable build recipe (round-trips through :func:`build_grid_space`).
    base_point : int
        Index of the distinguished point playing the role of the origin.
    """

    def __init__(self, distances, weights, topology="periodic", ambient_dim=1,
                 descriptor=None, base_point=0):
        distances = np.ascontiguousarray(distances, dtype=float)
        weights = np.ascontiguousarray(weights, dtype=float)
        if distances.ndim != 2 or distances.shape[0] != distances.shape[1]:
            raise SpaceError("distance matrix must be square")
        if weights.shape != (distances.shape[0],):
            raise SpaceError("weights shape does not match point count")
        if np.any(weights <= 0):
            raise SpaceError("all weights must be strictly positive")
        if topology not in ("periodic", "bounded"):
            raise SpaceError(f"unknown topology {topology!r}")
        self.distances = distances
        self.weights = weights
        self.topology = topology
        self.ambient_dim = int(ambient_dim)
        self.descriptor = dict(descriptor) if descriptor else {}
        self.base_point = int(base_point)
        self._ball_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._comp_cache: dict[int, np.ndarray] = {}
        self._unique: np.ndarray | None = None
        self._doubling: DoublingReport | None = None

    # -- basic queries ------------------------------------------------------

    @property
    def n_points(self) -> int:
        return self.distances.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def diameter(self) -> float:
        return float(self.distances.max())

    @property
    def min_spacing(self) -> float:
        if self.n_points == 1:
            return 0.0
        d = self.distances + np.diag(np.full(self.n_points, np.inf))
        return float(d.min())

    def ball_members(self, center: int, radius: float) -> np.ndarray:
        """Indices of the open ball B(center, radius)."""
        return np.flatnonzero(self.distances[center] < radius)

    def _radius_key(self, radius: float) -> int:
        # balls only change when the radius crosses a realized distance value
        if self._unique is None:
            self._unique = np.unique(self.distances)
        return int(np.searchsorted(self._unique, radius, side="left"))

    def ball_ops(self, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Boolean membership matrix ``d < r`` and per-center volumes, cached.

        Entry ``[x, y]`` is True when y lies in B(x, radius); the matrix is
        symmetric.  Volumes are ``V(x, radius)``.
        """
        key = self._radius_key(radius)
        hit = self._ball_cache.get(key)
        if hit is None:
            mask = self.distances < radius
            vol = mask @ self.weights
            hit = (mask, vol)
            if len(self._ball_cache) < 512:
                self._ball_cache[key] = hit
        return hit

    def complement_distance(self, radius: float) -> np.ndarray:
        """Matrix ``C[y, c] = dist(y, complement of B(c, radius))``.

        Centers whose ball exhausts the space get +inf columns.  Cached per
        effective radius class.
        """
        key = self._radius_key(radius)
        hit = self._comp_cache.get(key)
        if hit is not None:
            return hit
        D = self.distances
        n = self.n_points
        out = np.empty((n, n))
        outside = D >= radius  # [c, z]: z outside B(c, r)
        chunk = max(1, (1 << 22) // (n * n) + 1)
        for c0 in range(0, n, chunk):
            c1 = min(n, c0 + chunk)
            m = outside[c0:c1][:, None, :]  # (c, 1, z)
            vals = np.where(m, D[None, :, :], np.inf)
            out[:, c0:c1] = vals.min(axis=2).T
        if len(self._comp_cache) < 256:
            self._comp_cache[key] = out
        return out

    # -- mu-weighted algebra -------------------------------------------------

    def inner(self, f, g) -> complex:
        """Weighted inner product ``sum mu_x f(x) conj(g(x))``."""
        return complex(np.sum(self.weights * np.asarray(f) * np.conj(g)))

    def norm(self, f, subset=None) -> float:
        f = np.asarray(f)
        if subset is not None:
            return float(np.sqrt(np.sum(self.weights[subset] * np.abs(f[subset]) ** 2)))
        return float(np.sqrt(np.sum(self.weights * np.abs(f) ** 2)))

    def norm_p(self, f, p: float, subset=None) -> float:
        f = np.asarray(f)
        w = self.weights
        if subset is not None:
            f = f[subset]
            w = w[subset]
        if math.isinf(p):
            return float(np.max(np.abs(f))) if f.size else 0.0
        return float(np.sum(w * np.abs(f) ** p) ** (1.0 / p))

    def mean(self, f) -> complex:
        return complex(np.sum(self.weights * np.asarray(f)) / self.total_mass)

    def to_descriptor(self) -> dict:
        return dict(self.descriptor)


# -- constructors -------------------------------------------------------------


def _axis_offsets(n: int, wrap: bool) -> np.ndarray:
    idx = np.arange(n)
    diff = np.abs(idx[:, None] - idx[None, :])
    if wrap:
        diff = np.minimum(diff, n - diff)
    return diff


def build_grid_space(dims: Sequence[int], spacing: float, topology: str = "periodic",
                     node_budget: int = 4096, base_point: int = 0) -> MetricMeasureSpace:
    """Uniform grid with wrap-aware l1 graph metric scaled by ``spacing``.

    Weights are ``spacing**d`` so that the total mass matches the continuum
    cell volume.  Periodic grids wrap every axis; bounded grids do not.
    """
    dims = [int(d) for d in dims]
    if len(dims) == 0:
        raise SpaceError("dims must be a nonempty list")
    if any(d < 1 for d in dims):
        raise SpaceError(f"all dims must be positive, got {dims}")
    if not spacing > 0:
        raise SpaceError("spacing must be positive")
    if topology not in ("periodic", "bounded"):
        raise SpaceError(f"unknown topology {topology!r}")
    n_total = int(np.prod(dims))
    if n_total > node_budget:
        raise SpaceError(f"grid has {n_total} nodes, exceeding budget {node_budget}")

    wrap = topology == "periodic"
    dist_steps = np.zeros((n_total, n_total))
    # accumulate per-axis |offset| via kron structure of the C-ordered index
    stride_after = n_total
    for n_axis in dims:
        stride_after //= n_axis
        axis_idx = (np.arange(n_total) // stride_after) % n_axis
        off = _axis_offsets(n_axis, wrap)
        dist_steps += off[axis_idx[:, None], axis_idx[None, :]]

    d = len(dims)
    weights = np.full(n_total, float(spacing) ** d)
    descriptor = {"dims": dims, "spacing": float(spacing), "topology": topology}
    return MetricMeasureSpace(dist_steps * spacing, weights, topology=topology,
                              ambient_dim=d, descriptor=descriptor,
                              base_point=base_point)


def space_from_descriptor(descriptor: dict, **kwargs) -> MetricMeasureSpace:
    return build_grid_space(descriptor["dims"], descriptor["spacing"],
                            descriptor["topology"], **kwargs)


# -- measured geometry ---------------------------------------------------------


def ball_volume(space: MetricMeasureSpace, ball: Ball) -> float:
    """mu(B): sum of weights of points strictly inside the ball."""
    if not 0 <= ball.center < space.n_points:
        raise SpaceError(f"center {ball.center} outside space")
    members = space.ball_members(ball.center, ball.radius)
    return float(space.weights[members].sum())


def annulus(space: MetricMeasureSpace, ball: Ball, j: int) -> np.ndarray:
    """Dyadic shell around the ball: j=0 is the ball itself, j>=1 gives
    points with ``2^{j-1} r <= d < 2^j r``."""
    if j < 0:
        raise SpaceError("annulus index must be nonnegative")
    d = space.distances[ball.center]
    if j == 0:
        return np.flatnonzero(d < ball.radius)
    lo = 2.0 ** (j - 1) * ball.radius
    hi = 2.0 ** j * ball.radius
    return np.flatnonzero((d >= lo) & (d < hi))


def average(space: MetricMeasureSpace, t: float, f) -> np.ndarray:
    """Ball averaging operator: mean of f over B(x, t) in the weighted measure.

    For t below the point spacing the ball is the singleton {x} and the
    operator acts as the identity.
    """
    if not t > 0:
        raise SpaceError("averaging scale t must be positive")
    f = np.asarray(f)
    mask, vol = space.ball_ops(t)
    return (mask @ (space.weights * f)) / vol


def average_adjoint(space: MetricMeasureSpace, t: float, g) -> np.ndarray:
    """Adjoint of :func:`average` in the weighted inner product."""
    if not t > 0:
        raise SpaceError("averaging scale t must be positive")
    g = np.asarray(g)
    mask, vol = space.ball_ops(t)
    return mask @ ((space.weights / vol) * g)


def doubling_report(space: MetricMeasureSpace, samples: int = 64,
                    rng: np.random.Generator | None = None) -> DoublingReport:
    """Fit the volume growth V(x, l r) ~ A2 l^n V(x, r) over sampled (x, r, l).

    A1 is the measured doubling constant, the worst ratio V(x,2r)/V(x,r).
    (A2, n) come from a least-squares fit of log volume ratios against log l.
    """
    if samples < 1:
        raise SpaceError("need at least one sample")
    if rng is None:
        rng = np.random.default_rng(0)
    n_pts = space.n_points
    if n_pts == 1:
        return DoublingReport(A1=1.0, A2=1.0, n=0.0, zero_variance=True)

    diam = space.diameter
    lo = max(space.min_spacing, diam / n_pts)
    hi = max(diam / 4.0, 2 * lo)
    centers = rng.integers(0, n_pts, size=samples)
    radii = np.exp(rng.uniform(np.log(lo * 2), np.log(hi), size=samples))
    lambdas = np.array([1.5, 2.0, 3.0, 4.0])

    a1 = 1.0
    xs, ys = [], []
    for x, r in zip(centers, radii):
        d = space.distances[x]
        v_r = space.weights[d < r].sum()
        v_2r = space.weights[d < 2 * r].sum()
        a1 = max(a1, v_2r / v_r)
        for lam in lambdas:
            if lam * r > 2 * diam:
                continue
            v_lr = space.weights[d < lam * r].sum()
            xs.append(math.log(lam))
            ys.append(math.log(v_lr / v_r))
    xs_a = np.asarray(xs)
    ys_a = np.asarray(ys)
    if xs_a.size == 0 or float(np.ptp(ys_a)) < 1e-14:
        return DoublingReport(A1=float(a1), A2=1.0, n=0.0, zero_variance=True)
    coef = np.polyfit(xs_a, ys_a, 1)
    n_fit = float(coef[0])
    a2 = float(max(np.exp(ys_a - n_fit * xs_a).max(), 1.0))
    return DoublingReport(A1=float(a1), A2=a2, n=n_fit)


def doubling_exponent(space: MetricMeasureSpace) -> float:
    """Cached doubling exponent n, fitted once with a fixed internal seed."""
    if space._doubling is None:
        space._doubling = doubling_report(space, samples=64,
                                          rng=np.random.default_rng(0))
    return space._doubling.n


def set_distance(space: MetricMeasureSpace, set_a, set_b) -> float:
    """Distance between two point sets (0 if they intersect)."""
    set_a = np.asarray(set_a, dtype=int)
    set_b = np.asarray(set_b, dtype=int)
    if set_a.size == 0 or set_b.size == 0:
        raise SpaceError("set distance needs nonempty sets")
    return float(space.distances[np.ix_(set_a, set_b)].min())


def check_metric(space: MetricMeasureSpace, rng: np.random.Generator,
                 samples: int = 200) -> float:
    """Worst sampled triangle-inequality violation (should be <= 0)."""
    n = space.n_points
    ijk = rng.integers(0, n, size=(samples, 3))
    d = space.distances
    viol = d[ijk[:, 0], ijk[:, 2]] - d[ijk[:, 0], ijk[:, 1]] - d[ijk[:, 1], ijk[:, 2]]
    return float(viol.max())
