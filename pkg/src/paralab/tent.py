"""Discrete tent-space machinery over a space times a geometric scale grid.

A field is a complex array F(x, t_k) on points x and grid scales t_k.  Cones
have aperture 1 with strict membership d(y, x) < t; the tent over an open
set O collects pairs (y, t) with dist(y, complement of O) >= t.  The scale
measure dt/t is discretized with the uniform log-weight ln(2)/q.

Ball suprema (Carleson function, Carleson norm, BMO-style averages) are
taken over the family of all centers with radii drawn from the grid plus the
diameter; balls exhausting the whole space are excluded because their tent
is ill-defined on a compact discretization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calculus import semigroup_field
from .grids import TGrid
from .space import MetricMeasureSpace


@dataclass
class FieldFunction:
    """Complex field on points x grid scales, point-major storage."""

    values: np.ndarray
    tgrid: TGrid

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=complex)
        if self.values.ndim != 2:
            raise ValueError("field values must be 2d (points x scales)")
        if self.values.shape[1] != self.tgrid.size:
            raise ValueError(f"field has {self.values.shape[1]} scale columns, "
                             f"grid has {self.tgrid.size}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    def save(self, path) -> None:
        """Dense binary block plus a sidecar descriptor."""
        path = Path(path)
        np.save(path.with_suffix(".npy"), self.values)
        sidecar = {"n_points": self.n_points, "layout": "point-major, scale fastest",
                   "dtype": "complex128", "tgrid": self.tgrid.descriptor()}
        path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True))

    @classmethod
    def load(cls, path) -> "FieldFunction":
        path = Path(path)
        values = np.load(path.with_suffix(".npy"))
        sidecar = json.loads(path.with_suffix(".json").read_text())
        return cls(values, TGrid(**sidecar["tgrid"]))


def conical_square(space: MetricMeasureSpace, field: FieldFunction) -> np.ndarray:
    """Aperture-1 conical square function of the field."""
    acc = np.zeros(space.n_points)
    dlog = field.tgrid.dlog
    for k, t in enumerate(field.tgrid.nodes):
        mask, vol = space.ball_ops(float(t))
        acc += (mask @ (space.weights * np.abs(field.values[:, k]) ** 2)) / vol * dlog
    return np.sqrt(acc)


def nontangential_max(space: MetricMeasureSpace, field: FieldFunction) -> np.ndarray:
    """Pointwise sup of |F| over the aperture-1 cone."""
    out = np.zeros(space.n_points)
    for k, t in enumerate(field.tgrid.nodes):
        mask, _ = space.ball_ops(float(t))
        col = np.abs(field.values[:, k])
        out = np.maximum(out, np.where(mask, col[:, None], 0.0).max(axis=0))
    return out


# -- tents over balls --------------------------------------------------------


def ball_radii(space: MetricMeasureSpace, tgrid: TGrid,
               include_diameter: bool = True) -> list[float]:
    """Deduplicated effective radii for ball suprema: grid scales plus diam."""
    candidates = list(tgrid.nodes) + ([space.diameter] if include_diameter else [])
    seen, radii = set(), []
    for r in candidates:
        r = float(r)
        if r <= 0:
            continue
        key = space._radius_key(r)
        if key in seen:
            continue
        seen.add(key)
        radii.append(r)
    return radii


def _tent_mass_over_volume(space: MetricMeasureSpace, density: np.ndarray,
                           tgrid: TGrid, radius: float) -> np.ndarray:
    """Per-center tent mass of ``density * mu dt/t`` over B(c, radius),
    divided by the ball volume; NaN where the complement is empty."""
    nodes = tgrid.nodes
    cum = np.concatenate([np.zeros((space.n_points, 1)),
                          np.cumsum(density * tgrid.dlog, axis=1)], axis=1)
    dcomp = space.complement_distance(radius)
    # scales allowed at y inside the tent: t_k <= dist(y, complement)
    idx = np.searchsorted(nodes, dcomp, side="right")
    idx = np.minimum(idx, nodes.size)
    take = cum[np.arange(space.n_points)[:, None], idx]
    mass = space.weights @ take
    _, vol = space.ball_ops(radius)
    out = mass / vol
    # a ball exhausting the space has an empty complement and no tent
    out[np.isinf(dcomp).any(axis=0)] = np.nan
    return out


def carleson_norm(space: MetricMeasureSpace, density: FieldFunction) -> float:
    """sup over enumerated balls of tent mass / ball volume for the measure
    ``density * mu dt/t`` (density must be nonnegative)."""
    vals = np.real(density.values)
    if np.any(vals < -1e-12 * max(np.abs(vals).max(), 1e-300)):
        raise ValueError("carleson_norm expects a nonnegative density")
    best = 0.0
    for r in ball_radii(space, density.tgrid):
        per_center = _tent_mass_over_volume(space, np.maximum(vals, 0.0),
                                            density.tgrid, r)
        finite = per_center[np.isfinite(per_center)]
        if finite.size:
            best = max(best, float(finite.max()))
    return best


def carleson_functional(space: MetricMeasureSpace,
                        field: FieldFunction) -> np.ndarray:
    """Carleson function: sup over enumerated balls containing x of the
    root-mean tent energy of |F|^2."""
    density = np.abs(field.values) ** 2
    best = np.zeros(space.n_points)
    for r in ball_radii(space, field.tgrid):
        per_center = _tent_mass_over_volume(space, density, field.tgrid, r)
        ok = np.isfinite(per_center)
        if not ok.any():
            continue
        mask, _ = space.ball_ops(r)  # mask[c, x]: x in B(c, r)
        vals = np.where(ok[:, None] & mask, per_center[:, None], 0.0)
        best = np.maximum(best, vals.max(axis=0))
    return np.sqrt(best)


def tent_norm(space: MetricMeasureSpace, field: FieldFunction, p: float) -> float:
    """L^p norm of the conical square function; p = inf takes the sup of the
    Carleson function instead."""
    if p < 1:
        raise ValueError("tent norms are defined here for p >= 1")
    if math.isinf(p):
        return float(carleson_functional(space, field).max())
    return space.norm_p(conical_square(space, field), p)


def carleson_pairing(space: MetricMeasureSpace, field: FieldFunction,
                     density: FieldFunction) -> float:
    """Integral of |F| against the measure density * mu dt/t."""
    return float(np.sum(space.weights[:, None] * np.abs(field.values)
                        * np.real(density.values)) * field.tgrid.dlog)


# -- maximal functions --------------------------------------------------------


def maximal_Nh(op, f, tgrid: TGrid) -> np.ndarray:
    """Cone sup of ball-averaged semigroup amplitudes:
    sup_{d(y,x) < t} ( mean_{B(y,t)} |e^{-t^{2m}L} f|^2 )^{1/2}."""
    space = op.space
    sg = semigroup_field(op, f, tgrid)
    avg = np.empty((space.n_points, tgrid.size))
    for k, t in enumerate(tgrid.nodes):
        mask, vol = space.ball_ops(float(t))
        avg[:, k] = np.sqrt((mask @ (space.weights * np.abs(sg[:, k]) ** 2)) / vol)
    return nontangential_max(space, FieldFunction(avg.astype(complex), tgrid))


def maximal_M2(space: MetricMeasureSpace, f, radii) -> np.ndarray:
    """Uncentered L^2 maximal function over the enumerated ball family."""
    f2 = space.weights * np.abs(np.asarray(f)) ** 2
    out = np.zeros(space.n_points)
    for r in radii:
        mask, vol = space.ball_ops(float(r))
        per_center = (mask @ f2) / vol
        out = np.maximum(out, np.where(mask, per_center[:, None], 0.0).max(axis=0))
    return np.sqrt(out)


# -- duality diagnostics ------------------------------------------------------


def duality_checks(space: MetricMeasureSpace, field_f: FieldFunction,
                   field_g: FieldFunction, p: float) -> dict:
    """Measured constants in the tent-space pairing inequalities.

    (a) pairing |FG| against the product of conical square functions;
    (b) for p = 1, against square function of F times Carleson function of G;
    (c) for p > 2, Carleson function of F*G in L^p against the nontangential
        max of F times the sup of the Carleson function of G.

    Ratios are LHS/RHS; a vacuous 0/0 is flagged rather than reported.
    """
    if not (p == 1 or 1 < p < math.inf or p > 2):
        raise ValueError("p must be in [1, inf)")
    if field_f.tgrid.descriptor() != field_g.tgrid.descriptor():
        raise ValueError("fields must share a scale grid")
    out: dict = {"p": p}
    lhs = float(np.sum(space.weights[:, None]
                       * np.abs(field_f.values * field_g.values))
                * field_f.tgrid.dlog)
    af = conical_square(space, field_f)
    ag = conical_square(space, field_g)
    rhs_a = float(np.sum(space.weights * af * ag))
    out["pairing_vs_square"] = _ratio(lhs, rhs_a)
    if p == 1:
        cg = carleson_functional(space, field_g)
        rhs_b = float(np.sum(space.weights * af * cg))
        out["pairing_vs_square_carleson"] = _ratio(lhs, rhs_b)
    if p > 2:
        prod = FieldFunction(field_f.values * field_g.values, field_f.tgrid)
        lhs_c = space.norm_p(carleson_functional(space, prod), p)
        fstar = nontangential_max(space, field_f)
        cg = carleson_functional(space, field_g)
        rhs_c = space.norm_p(fstar, p) * float(cg.max())
        out["carleson_product_vs_max"] = _ratio(lhs_c, rhs_c)
    return out


def _ratio(lhs: float, rhs: float):
    if rhs <= 0:
        return {"ratio": None, "vacuous": True, "lhs": lhs, "rhs": rhs}
    return {"ratio": lhs / rhs, "vacuous": False, "lhs": lhs, "rhs": rhs}
