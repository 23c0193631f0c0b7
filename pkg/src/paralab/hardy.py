"""Hardy-type square-function norms, BMO norms, and molecules.

The H^p-style norm of f is the L^p norm of the conical square function of
the field psi(t^{2m}L) f; admissible symbols need enough decay at infinity
for p <= 2 and enough vanishing at 0 for p >= 2 (threshold n/4m with the
fitted doubling exponent n).  The BMO-style norm averages
|(I - e^{-r^{2m}L})^M f|^2 over balls.  Molecules are normalized range
elements with dyadic-annulus size control relative to a base ball.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .calculus import (HypothesisError, PsiFunction, apply_semigroup,
                       psi_field)
from .grids import TGrid
from .operator import SectorialOperator
from .space import Ball, annulus, doubling_exponent
from .tent import FieldFunction, ball_radii, carleson_norm, conical_square


class MoleculeError(RuntimeError):
    """Witness inconsistency while checking a molecule."""


@dataclass
class Molecule:
    """Candidate molecule m = L^M b adapted to a ball.

    ``bound_ratios[k, j]`` compares ||(r^{2m} L)^k b|| on the j-th annulus
    against the admissible size r^{2mM} 2^{-j eps} V(2^j B)^{-1/2}; a valid
    molecule keeps every ratio at most 1.
    """

    values: np.ndarray
    witness: np.ndarray
    ball: Ball
    M: int
    eps: float
    bound_ratios: np.ndarray
    witness_residual: float
    passed: bool = True

    @property
    def max_ratio(self) -> float:
        return float(np.nanmax(self.bound_ratios))

    def to_dict(self) -> dict:
        return {"ball": {"center": self.ball.center, "radius": self.ball.radius},
                "M": self.M, "eps": self.eps,
                "witness_residual": self.witness_residual,
                "max_ratio": self.max_ratio, "passed": self.passed,
                "values_re": self.values.real.tolist(),
                "values_im": self.values.imag.tolist(),
                "witness_re": self.witness.real.tolist(),
                "witness_im": self.witness.imag.tolist(),
                "bound_ratios": self.bound_ratios.tolist()}


@dataclass
class HardyNormReport:
    p: float
    psi_label: str
    value: float
    tgrid: dict
    refinement_delta: float | None = None


def _n_over_4m(op: SectorialOperator) -> float:
    return doubling_exponent(op.space) / (2.0 * op.order_2m)


def default_bmo_M(op: SectorialOperator) -> int:
    return int(math.floor(_n_over_4m(op))) + 1


def hardy_norm(op: SectorialOperator, f, p: float, psi: PsiFunction,
               tgrid: TGrid, check_hypothesis: bool = True,
               refine: bool = False) -> HardyNormReport:
    """L^p norm of the conical square function of psi(t^{2m}L) f."""
    if not 1 <= p < math.inf:
        raise ValueError("p must lie in [1, inf)")
    if check_hypothesis:
        thr = _n_over_4m(op)
        low_ok = psi.alpha > 0 and psi.beta > thr
        high_ok = psi.alpha > thr and psi.beta > 0
        if p < 2 and not low_ok:
            raise HypothesisError(
                f"p={p} needs decay beta > n/4m = {thr:.3g}; "
                f"{psi.label} has beta = {psi.beta:g}")
        if p > 2 and not high_ok:
            raise HypothesisError(
                f"p={p} needs vanishing alpha > n/4m = {thr:.3g}; "
                f"{psi.label} has alpha = {psi.alpha:g}")
        if p == 2 and not (low_ok or high_ok):
            raise HypothesisError(
                f"p=2 needs alpha > n/4m = {thr:.3g} or beta > n/4m; "
                f"{psi.label} has alpha = {psi.alpha:g}, beta = {psi.beta:g}")

    def _value(grid: TGrid) -> float:
        fld = FieldFunction(psi_field(op, psi, f, grid), grid)
        return op.space.norm_p(conical_square(op.space, fld), p)

    value = _value(tgrid)
    delta = None
    if refine:
        fine = _value(tgrid.refined())
        delta = abs(fine - value) / max(fine, 1e-300)
    return HardyNormReport(p, psi.label, float(value), tgrid.descriptor(), delta)


def bmo_norm(op: SectorialOperator, f, M: int | None = None,
             radii=None) -> float:
    """sup over balls of the rms of (I - e^{-r^{2m}L})^M f on the ball."""
    space = op.space
    if M is None:
        M = default_bmo_M(op)
    if M <= _n_over_4m(op):
        warnings.warn(f"M = {M} does not exceed n/4m = {_n_over_4m(op):.3g}; "
                      "the BMO value is still computed", stacklevel=2)
    if radii is None:
        radii = _dyadic_radii(space)
    f = np.asarray(f, dtype=complex)
    best = 0.0
    for r in radii:
        g = f
        s = float(r) ** op.order_2m
        for _ in range(M):
            g = g - apply_semigroup(op, s, g)
        mask, vol = space.ball_ops(float(r))
        per_center = (mask @ (space.weights * np.abs(g) ** 2)) / vol
        best = max(best, float(per_center.max()))
    return math.sqrt(best)


def bmo_m_spread(op: SectorialOperator, f, M0: int | None = None,
                 radii=None) -> tuple[float, float]:
    """BMO values at consecutive admissible M; on finite spaces these differ,
    so the spread is reported instead of asserted equal."""
    if M0 is None:
        M0 = default_bmo_M(op)
    return (bmo_norm(op, f, M0, radii), bmo_norm(op, f, M0 + 1, radii))


def _dyadic_radii(space) -> list[float]:
    lo = max(space.min_spacing, space.diameter / space.n_points)
    radii = []
    r = lo
    while r < space.diameter:
        radii.append(r)
        r *= 2.0
    radii.append(space.diameter)
    return radii


# -- molecules -----------------------------------------------------------------


def _annulus_count(space, ball: Ball) -> int:
    return int(math.floor(math.log2(max(space.diameter / ball.radius, 1.0)))) + 2


def molecule_ratios(op: SectorialOperator, b, ball: Ball, M: int,
                    eps: float) -> np.ndarray:
    """Size ratios of the witness over annuli, rows k = 0..M."""
    space = op.space
    r2m = ball.radius ** op.order_2m
    j_max = _annulus_count(space, ball)
    ratios = np.full((M + 1, j_max), np.nan)
    g = np.asarray(b, dtype=complex)
    for k in range(M + 1):
        for j in range(j_max):
            shell = annulus(space, ball, j)
            if shell.size == 0:
                continue
            lhs = space.norm(g, subset=shell)
            big_ball = space.ball_members(ball.center, 2.0 ** j * ball.radius)
            vol = float(space.weights[big_ball].sum())
            bound = r2m ** M * 2.0 ** (-j * eps) / math.sqrt(vol)
            ratios[k, j] = lhs / bound
        if k < M:
            g = r2m * op.apply(g)
    return ratios


def molecule_make(op: SectorialOperator, ball: Ball, M: int, eps: float
                  ) -> Molecule:
    """Normalized molecule seeded by the semigroup of a ball indicator.

    The candidate witness is e^{-r^{2m}L}(1_B / V(B)^{1/2}) rescaled so the
    worst annulus ratio is exactly 1; the molecule itself is L^M applied to
    the witness.
    """
    if M < 1:
        raise ValueError("M must be a positive integer")
    if not eps > 0:
        raise ValueError("eps must be positive")
    space = op.space
    members = space.ball_members(ball.center, ball.radius)
    if members.size == 0:
        raise MoleculeError("seed ball contains no points")
    indicator = np.zeros(space.n_points, dtype=complex)
    vol = float(space.weights[members].sum())
    indicator[members] = 1.0 / math.sqrt(vol)
    b0 = apply_semigroup(op, ball.radius ** op.order_2m, indicator)
    b0 = op.range_part(b0)
    if space.norm(b0) < 1e-14:
        raise MoleculeError("seed candidate vanishes")
    ratios = molecule_ratios(op, b0, ball, M, eps)
    top = float(np.nanmax(ratios))
    if top <= 0:
        raise MoleculeError("degenerate size ratios")
    b = b0 / top
    m = _power_apply(op, b, M)
    return Molecule(m, b, ball, M, eps, ratios / top,
                    witness_residual=0.0, passed=True)


def _power_apply(op, v, k: int) -> np.ndarray:
    out = np.asarray(v, dtype=complex)
    for _ in range(k):
        out = op.apply(out)
    return out


def molecule_check(op: SectorialOperator, candidate, witness, ball: Ball,
                   M: int, eps: float) -> Molecule:
    """Recompute all annulus ratios for a claimed molecule.

    Raises :class:`MoleculeError` when the witness does not reproduce the
    candidate; otherwise returns the molecule with ``passed`` reflecting
    whether every ratio stays below 1 (+ tolerance).
    """
    candidate = np.asarray(candidate, dtype=complex)
    witness = np.asarray(witness, dtype=complex)
    reproduced = _power_apply(op, witness, M)
    scale = max(op.space.norm(candidate), 1e-300)
    resid = op.space.norm(candidate - reproduced) / scale
    if resid > 1e-6:
        raise MoleculeError(f"witness mismatch: relative residual {resid:.2e}")
    ratios = molecule_ratios(op, witness, ball, M, eps)
    passed = bool(np.nanmax(ratios) <= 1.0 + 1e-6)
    return Molecule(candidate, witness, ball, M, eps, ratios, resid, passed)


# -- Carleson characterization and reproducing pairings ---------------------------


def carleson_characterization(op: SectorialOperator, psi: PsiFunction, b,
                              tgrid: TGrid, M: int | None = None) -> dict:
    """Compare the Carleson norm of |psi(t^{2m}L) b|^2 mu dt/t with the
    squared BMO norm of b over the same ball family."""
    thr = _n_over_4m(op)
    if not psi.alpha > thr:
        warnings.warn(
            f"symbol vanishing order {psi.alpha:g} does not exceed n/4m = "
            f"{thr:.3g}; the two-sided comparison may degrade", stacklevel=2)
    if M is None:
        M = default_bmo_M(op)
    fld = FieldFunction(np.abs(psi_field(op, psi, b, tgrid)) ** 2, tgrid)
    carleson = carleson_norm(op.space, fld)
    radii = ball_radii(op.space, tgrid)
    bmo_sq = bmo_norm(op, b, M, radii) ** 2
    out = {"carleson": float(carleson), "bmo_sq": float(bmo_sq), "M": M}
    if bmo_sq > 0:
        out["ratio"] = carleson / bmo_sq
        out["inconsistent"] = False
    else:
        out["ratio"] = None
        out["inconsistent"] = bool(carleson > 1e-10)
    return out


def reproducing_pairing_check(op: SectorialOperator, psi: PsiFunction,
                              psi_tilde: PsiFunction, f, g,
                              tgrid: TGrid) -> dict:
    """Truncated scale-sum approximation of the pairing <f, g>.

    The sum pairs psi(t^{2m} L*) f against psi_tilde(t^{2m} L) g with the
    2m-compensated log weight; the absolute and relative residuals against
    the direct pairing are reported.
    """
    thr = _n_over_4m(op)
    if not psi.alpha + psi_tilde.alpha > thr:
        raise HypothesisError(
            f"combined vanishing order {psi.alpha + psi_tilde.alpha:g} "
            f"must exceed n/4m = {thr:.3g}")
    space = op.space
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    field_f = psi_field(op.adjoint(), psi, f, tgrid)
    field_g = psi_field(op, psi_tilde, g, tgrid)
    weight = op.order_2m * tgrid.dlog
    tsum = complex(np.sum(space.weights[:, None] * field_f * np.conj(field_g))
                   * weight)
    pairing = space.inner(f, g)
    residual = abs(pairing - tsum)
    return {"pairing": pairing, "scale_sum": tsum, "residual": residual,
            "relative": residual / max(abs(pairing), 1e-300)}
