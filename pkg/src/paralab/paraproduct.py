"""Semigroup paraproducts built from the functional calculus.

The bilinear form is

    Pi(f, g) = sum_k  psi_tilde(t_k^{2m} L)[ psi(t_k^{2m} L) g
                                             * A_t (e^{-t_k^{2m} L} f) ] * 2m dlog t,

a truncated realization of the dt/t integral: the first slot is the bounded
factor that only enters through averaged semigroup amplitudes, the second
goes through the vanishing symbol.  ``Pi_b f = Pi(f, b)``.  The averaging
step can be switched off to recover the convolution-style variant.

All measurement routines report empirical suprema over seeded random plus
structured probes; theorems are turned into stability statements about
those suprema rather than asserted constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .calculus import (HypothesisError, PsiFunction, apply_fractional_power,
                       apply_semigroup, psi_field, _oracle_or_raise)
from .grids import TGrid
from .hardy import Molecule, bmo_norm, hardy_norm
from .operator import SectorialOperator
from .space import average_adjoint, doubling_exponent, set_distance
from .tent import ball_radii


@dataclass
class ParaproductSpec:
    """Symbol pair, scale grid and averaging switch defining a paraproduct."""

    psi: PsiFunction
    psi_tilde: PsiFunction
    tgrid: TGrid
    averaging: bool = True

    def hypothesis_flags(self, op: SectorialOperator) -> dict:
        """Which boundedness statements the declared decay orders support.

        ``l2``: vanishing of psi above n/4m (plus measured annular input);
        ``lp_to_hp``: decay of psi_tilde above n/4m;
        ``hp_to_l1``: vanishing of psi and of psi_tilde above n/4m together
        with decay of psi_tilde above n/4m.
        """
        thr = doubling_exponent(op.space) / (2.0 * op.order_2m)
        return {
            "threshold": thr,
            "l2": self.psi.alpha > thr,
            "lp_to_hp": self.psi.alpha > thr and self.psi_tilde.beta > thr,
            "hp_to_l1": (self.psi.alpha > thr and self.psi_tilde.alpha > thr
                         and self.psi_tilde.beta > thr),
        }

    def descriptor(self) -> dict:
        return {"psi": self.psi.descriptor, "psi_tilde": self.psi_tilde.descriptor,
                "tgrid": self.tgrid.descriptor(), "averaging": self.averaging}


@dataclass
class MeasureReport:
    quantity: str
    sup_ratio: float
    median_ratio: float
    n_probes: int
    denominator_flagged: bool = False
    stability: float | None = None
    details: dict = dc_field(default_factory=dict)


def _probe_matrix(op: SectorialOperator, trials: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Random complex fields plus structured probes (eigenvectors, ball
    indicators, constants): sup estimation needs adversarial-ish inputs."""
    n = op.n
    cols = [rng.standard_normal((n, trials)) + 1j * rng.standard_normal((n, trials))]
    oracle = op.oracle()
    order = np.argsort(np.abs(oracle.eigenvalues))
    picks = order[[1, n // 4, n // 2, -1]] if n >= 4 else order
    cols.append(oracle.right[:, picks])
    for radius in (op.space.diameter / 8, op.space.diameter / 3):
        center = int(rng.integers(0, n))
        ind = np.zeros((n, 1), dtype=complex)
        ind[op.space.ball_members(center, max(radius, op.space.min_spacing * 1.5)), 0] = 1.0
        cols.append(ind)
    cols.append(np.ones((n, 1), dtype=complex))
    return np.concatenate(cols, axis=1)


def paraproduct_apply(op: SectorialOperator, spec: ParaproductSpec, b, f
                      ) -> np.ndarray:
    """Pi_b f; accepts a matrix of probe columns in f."""
    f = np.asarray(f, dtype=complex)
    single = f.ndim == 1
    F = f[:, None] if single else f
    oracle = _oracle_or_raise(op)
    lam = oracle.eigenvalues
    nodes = spec.tgrid.nodes
    u = np.multiply.outer(lam, nodes.astype(float) ** op.order_2m)
    psi_vals = spec.psi(u)
    tilde_vals = spec.psi_tilde(u)
    exp_vals = np.exp(-u)

    qb = psi_field(op, spec.psi, np.asarray(b, dtype=complex), spec.tgrid)
    proj = op._projector()
    FK = proj @ F if proj is not None else np.zeros_like(F)
    wf = oracle.inv @ (F - FK)  # kernel handled exactly: conserved by the semigroup
    acc = np.zeros_like(wf)
    weight = op.order_2m * spec.tgrid.dlog
    for k, t in enumerate(nodes):
        sg = FK + oracle.right @ (exp_vals[:, k][:, None] * wf)
        if spec.averaging:
            sg = _average_cols(op.space, float(t), sg)
        prod = qb[:, k][:, None] * sg
        acc += tilde_vals[:, k][:, None] * (oracle.inv @ prod)
    out = oracle.right @ (acc * weight)
    return out[:, 0] if single else out


def _average_cols(space, t: float, cols: np.ndarray) -> np.ndarray:
    mask, vol = space.ball_ops(t)
    return (mask @ (space.weights[:, None] * cols)) / vol[:, None]


def paraproduct_bilinear(op: SectorialOperator, spec: ParaproductSpec, f, g
                         ) -> np.ndarray:
    """Pi(f, g): first slot bounded, second through the vanishing symbol.

    A matrix g batches probe columns against one fixed f (the averaged
    semigroup amplitudes of f are shared across the batch).
    """
    g = np.asarray(g, dtype=complex)
    if g.ndim == 1:
        return paraproduct_apply(op, spec, b=g, f=f)
    f = np.asarray(f, dtype=complex)
    if f.ndim != 1:
        raise ValueError("batched second slot needs a single first-slot function")
    oracle = _oracle_or_raise(op)
    lam = oracle.eigenvalues
    nodes = spec.tgrid.nodes
    u = np.multiply.outer(lam, nodes.astype(float) ** op.order_2m)
    psi_vals = spec.psi(u)
    tilde_vals = spec.psi_tilde(u)
    fk = op.kernel_part(f)
    wf = oracle.inv @ (f - fk)
    wg = oracle.inv @ g
    acc = np.zeros_like(wg)
    weight = op.order_2m * spec.tgrid.dlog
    for k, t in enumerate(nodes):
        sg = fk + oracle.right @ (np.exp(-u[:, k]) * wf)
        if spec.averaging:
            sg = _average_cols(op.space, float(t), sg[:, None])[:, 0]
        qg = oracle.right @ (psi_vals[:, k][:, None] * wg)
        acc += tilde_vals[:, k][:, None] * (oracle.inv @ (qg * sg[:, None]))
    return oracle.right @ (acc * weight)


def paraproduct_adjoint_apply(op: SectorialOperator, spec: ParaproductSpec,
                              b, g) -> np.ndarray:
    """Weighted adjoint of Pi_b:

        sum_k e^{-t^{2m} L*} A_t* [ conj(psi(t^{2m}L) b)
                                    * psi_tilde*(t^{2m} L*) g ] * 2m dlog t.
    """
    g = np.asarray(g, dtype=complex)
    space = op.space
    adj = op.adjoint()
    qb = psi_field(op, spec.psi, np.asarray(b, dtype=complex), spec.tgrid)
    tg = psi_field(adj, spec.psi_tilde.conj_reflect(), g, spec.tgrid)
    weight = op.order_2m * spec.tgrid.dlog
    out = np.zeros(op.n, dtype=complex)
    for k, t in enumerate(spec.tgrid.nodes):
        prod = np.conj(qb[:, k]) * tg[:, k]
        if spec.averaging:
            prod = average_adjoint(space, float(t), prod)
        out += apply_semigroup(adj, float(t) ** op.order_2m, prod) * weight
    return out


# -- boundedness measurements ----------------------------------------------------


def measure_para_l2(op: SectorialOperator, spec: ParaproductSpec, b,
                    trials: int, rng: np.random.Generator,
                    stability: bool = False) -> MeasureReport:
    """Empirical sup of ||Pi_b f||_2 / (||b||_BMO ||f||_2)."""
    space = op.space
    b = np.asarray(b, dtype=complex)
    radii = ball_radii(space, spec.tgrid)
    denom_b = bmo_norm(op, b, radii=radii)
    flagged = False
    if denom_b <= 1e-12 * max(space.norm_p(b, math.inf), 1e-300):
        denom_b = space.norm_p(b, math.inf)
        flagged = True
    probes = _probe_matrix(op, trials, rng)
    out = paraproduct_apply(op, spec, b, probes)
    nums = np.sqrt(space.weights @ (np.abs(out) ** 2))
    dens = np.sqrt(space.weights @ (np.abs(probes) ** 2))
    ok = dens > 0
    ratios = np.zeros(probes.shape[1])
    if denom_b > 0:
        ratios[ok] = nums[ok] / (denom_b * dens[ok])
    report = MeasureReport("para_l2_ratio", float(ratios.max()),
                           float(np.median(ratios[ok])), int(probes.shape[1]),
                           denominator_flagged=flagged,
                           details={"bmo": denom_b, "ratios": ratios.tolist()})
    if stability:
        coarse = ParaproductSpec(spec.psi, spec.psi_tilde,
                                 TGrid(spec.tgrid.delta, spec.tgrid.R,
                                       max(spec.tgrid.q // 2, 1)),
                                 spec.averaging)
        rough = measure_para_l2(op, coarse, b, trials, rng, stability=False)
        report.stability = abs(report.sup_ratio - rough.sup_ratio) \
            / max(report.sup_ratio, 1e-300)
    return report


def measure_para_lp_hp(op: SectorialOperator, spec: ParaproductSpec, b,
                       p: float, trials: int, rng: np.random.Generator,
                       psi_out: PsiFunction | None = None,
                       M: int | None = None) -> MeasureReport:
    """Empirical sup of the H^p-style norm (BMO norm for p = inf) of Pi_b f
    against ||b||_BMO ||f||_p."""
    if not p > 2:
        raise ValueError("this measurement targets p in (2, inf]")
    space = op.space
    b = np.asarray(b, dtype=complex)
    radii = ball_radii(space, spec.tgrid)
    denom_b = bmo_norm(op, b, radii=radii)
    flagged = False
    if denom_b <= 1e-12 * max(space.norm_p(b, math.inf), 1e-300):
        denom_b = space.norm_p(b, math.inf)
        flagged = True
    probes = _probe_matrix(op, trials, rng)
    out = paraproduct_apply(op, spec, b, probes)
    ratios = []
    for i in range(probes.shape[1]):
        den = space.norm_p(probes[:, i], p)
        if den <= 0:
            continue
        if math.isinf(p):
            num = bmo_norm(op, out[:, i], M, radii=radii)
        else:
            num = hardy_norm(op, out[:, i], p, psi_out or _default_out_symbol(op),
                             spec.tgrid).value
        ratios.append(num / (denom_b * den))
    ratios_arr = np.asarray(ratios)
    return MeasureReport(f"para_lp_hp_ratio[p={p}]", float(ratios_arr.max()),
                         float(np.median(ratios_arr)), len(ratios),
                         denominator_flagged=flagged,
                         details={"bmo": denom_b, "ratios": ratios})


def _default_out_symbol(op: SectorialOperator) -> PsiFunction:
    from .calculus import psi_make
    thr = doubling_exponent(op.space) / (2.0 * op.order_2m)
    return psi_make("exp_monomial", a=math.floor(thr) + 1)


def measure_para_hp_l1(op: SectorialOperator, spec: ParaproductSpec,
                       f_bounded, molecules: list[Molecule]) -> MeasureReport:
    """sup over molecules of ||Pi(f, m)||_1 / ||f||_inf."""
    if not molecules:
        raise ValueError("need at least one molecule")
    space = op.space
    f_bounded = np.asarray(f_bounded, dtype=complex)
    den = space.norm_p(f_bounded, math.inf)
    ratios = []
    for mol in molecules:
        out = paraproduct_bilinear(op, spec, f_bounded, mol.values)
        ratios.append(space.norm_p(out, 1.0) / max(den, 1e-300))
    arr = np.asarray(ratios)
    return MeasureReport("para_hp_l1_ratio", float(arr.max()),
                         float(np.median(arr)), len(ratios),
                         details={"ratios": ratios})


def measure_para_linf_l2(op: SectorialOperator, spec: ParaproductSpec,
                         trials: int, rng: np.random.Generator) -> MeasureReport:
    """sup of ||Pi(f, g)||_2 / (||f||_inf ||g||_2) over random pairs."""
    space = op.space
    n = op.n
    ratios = []
    for _ in range(trials):
        f = np.exp(2j * math.pi * rng.uniform(size=n)) * rng.uniform(0.2, 1.0, n)
        g = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        out = paraproduct_bilinear(op, spec, f, g)
        den = space.norm_p(f, math.inf) * space.norm(g)
        if den > 0:
            ratios.append(space.norm(out) / den)
    arr = np.asarray(ratios)
    return MeasureReport("para_linf_l2_ratio", float(arr.max()),
                         float(np.median(arr)), len(ratios),
                         details={"ratios": ratios})


# -- off-diagonal decay of the bilinear form ---------------------------------------


@dataclass
class ParaOffdiagReport:
    gamma: float | None
    admissible: float
    window: float
    constant: float
    points: list
    distance: float
    saturated: bool


def para_offdiag(op: SectorialOperator, spec: ParaproductSpec, f_bounded,
                 E, F, phi: PsiFunction, tgrid: TGrid,
                 rng: np.random.Generator, probes: int = 4) -> ParaOffdiagReport:
    """Fit the decay order of ||phi(t^{2m}L) Pi(f, g)||_{L2(F)} for probes g
    supported in E, against (1 + dist^{2m}/t^{2m})^{-gamma}.

    The admissible order is min(vanishing of psi, vanishing of psi_tilde),
    windowed by min(decay of psi_tilde, vanishing of phi).
    """
    space = op.space
    E = np.asarray(E, dtype=int)
    F = np.asarray(F, dtype=int)
    dist = set_distance(space, E, F)
    f_bounded = np.asarray(f_bounded, dtype=complex)
    den_f = space.norm_p(f_bounded, math.inf)
    order = op.order_2m

    g_cols = np.zeros((op.n, probes), dtype=complex)
    g_cols[E, :] = rng.standard_normal((E.size, probes)) \
        + 1j * rng.standard_normal((E.size, probes))
    g_norms = np.sqrt(space.weights[E] @ (np.abs(g_cols[E, :]) ** 2))
    pi_cols = paraproduct_bilinear(op, spec, f_bounded, g_cols)

    oracle = _oracle_or_raise(op)
    lam = oracle.eigenvalues
    w_pi = oracle.inv @ pi_cols
    points = []
    for t in tgrid.nodes:
        vals = phi((float(t) ** order) * lam)
        out = oracle.right @ (vals[:, None] * w_pi)
        nums = np.sqrt(space.weights[F] @ (np.abs(out[F, :]) ** 2))
        ratio = float(np.max(nums / (den_f * g_norms)))
        x = math.log1p((dist / float(t)) ** order) if dist > 0 else 0.0
        points.append((float(t), x, ratio))
    tops = np.array([p[2] for p in points])
    top = float(tops.max()) if tops.size else 0.0
    admissible = min(spec.psi.alpha, spec.psi_tilde.alpha)
    window = min(spec.psi_tilde.beta, phi.alpha)
    if dist == 0:
        return ParaOffdiagReport(None, admissible, window, top, points, 0.0,
                                 saturated=False)
    usable = [(x, r) for (_, x, r) in points
              if r > 1e-13 and r > 1e-11 * top and x > 0.05]
    usable.sort(key=lambda p: p[0])
    if len(usable) >= 4:
        peak = int(np.argmax([r for (_, r) in usable]))
        if peak < len(usable) - 3:
            usable = usable[peak + 1:]
    if len(usable) < 2:
        return ParaOffdiagReport(None, admissible, window, top, points, dist,
                                 saturated=True)
    xs = np.array([u[0] for u in usable])
    ys = np.log([u[1] for u in usable])
    slope, intercept = np.polyfit(xs, ys, 1)
    return ParaOffdiagReport(float(-slope), admissible, window,
                             float(np.exp(intercept)), points, dist,
                             saturated=False)


# -- fractional Leibniz rule --------------------------------------------------------


def leibniz_check(op: SectorialOperator, spec: ParaproductSpec, s: float,
                  f_bounded, g) -> dict:
    """Fractional-power commutation identity behind the Leibniz rule.

    With psi_s(z) = z^{-s/2m} psi(z) and psi_tilde_s(z) = z^{s/2m}
    psi_tilde(z), the identity

        L^{s/2m} Pi(f, g) = Pi_s(f, L^{s/2m} g)

    holds term by term when both sides share the scale grid; the relative
    residual and the norm-bound ratio against ||f||_inf ||L^{s/2m} g||_2 are
    returned.
    """
    if not 0 < s < op.order_2m:
        raise ValueError(f"s must lie in (0, {op.order_2m})")
    frac = s / op.order_2m
    if not spec.psi.alpha > frac:
        raise HypothesisError(
            f"psi must vanish at order above s/2m = {frac:g}; "
            f"{spec.psi.label} has alpha = {spec.psi.alpha:g}")
    if not spec.psi_tilde.beta > frac:
        raise HypothesisError(
            f"psi_tilde must decay at order above s/2m = {frac:g}; "
            f"{spec.psi_tilde.label} has beta = {spec.psi_tilde.beta:g}")
    space = op.space
    f_bounded = np.asarray(f_bounded, dtype=complex)
    g = np.asarray(g, dtype=complex)
    shifted = ParaproductSpec(spec.psi.zpow(-frac), spec.psi_tilde.zpow(frac),
                              spec.tgrid, spec.averaging)
    lhs = apply_fractional_power(op, s, paraproduct_bilinear(op, spec, f_bounded, g))
    lg = apply_fractional_power(op, s, g)
    rhs = paraproduct_bilinear(op, shifted, f_bounded, lg)
    scale = max(space.norm(rhs), 1e-300)
    residual = space.norm(lhs - rhs) / scale
    den = space.norm_p(f_bounded, math.inf) * space.norm(lg)
    return {"identity_residual": float(residual),
            "norm_ratio": float(space.norm(lhs) / max(den, 1e-300)),
            "s": s}


# -- identity diagnostics ------------------------------------------------------------


def para_identity_check(op: SectorialOperator, spec: ParaproductSpec, b) -> dict:
    """Residuals of Pi_b(1) against the range part of b (the reproducing
    identity under conservation) and of Pi_b*(1) against 0."""
    space = op.space
    b = np.asarray(b, dtype=complex)
    ones = np.ones(op.n, dtype=complex)
    pb = op.range_part(b)
    lhs = paraproduct_apply(op, spec, b, ones)
    identity_residual = space.norm(lhs - pb) / max(space.norm(pb), 1e-300)
    adj = paraproduct_adjoint_apply(op, spec, b, ones)
    adjoint_residual = space.norm(adj) / max(space.norm_p(b, math.inf), 1e-300)
    return {"identity_residual": float(identity_residual),
            "adjoint_residual": float(adjoint_residual)}
