"""Functional calculus for discrete sectorial operators.

Two independent evaluation paths are kept side by side:

* a *contour* path realizing the Cauchy integral over the boundary of a
  sector, quadratured geometrically in the radial variable along two rays
  (exponentially convergent trapezoid rule for analytic integrands), with
  multishift resolvent solves behind it;
* a *spectral* path that applies the scalar function directly to the dense
  eigendecomposition.

The spectral path is the fast engine for scale sweeps; the contour path is
the object under test whenever the two are compared.  Both annihilate the
operator kernel exactly by projecting it off first (the scalar functions in
play vanish at the origin).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .grids import TGrid
from .operator import OperatorError, SectorialOperator
from .space import annulus as space_annulus
from .space import Ball, doubling_exponent, set_distance

# Stand-in decay order for entire functions of exponential type: within any
# realizable quadrature window they beat every polynomial rate, and closure
# arithmetic must saturate instead of overflowing.
DECAY_CAP = 1024.0


class CalculusError(RuntimeError):
    """Functional-calculus evaluation failure."""


class HypothesisError(ValueError):
    """A decay-order hypothesis required by a measurement is not met."""


# -- scalar function class -------------------------------------------------------


@dataclass(frozen=True)
class PsiFunction:
    """Holomorphic function on a sector with declared decay orders.

    ``alpha`` is the vanishing order at 0 and ``beta`` the decay order at
    infinity, in the sense |psi(z)| <= C |z|^alpha (1 + |z|^(alpha+beta))^-1.
    ``beta == DECAY_CAP`` marks faster-than-polynomial decay; ``beta == 0``
    marks bounded functions without decay (admissible for the spectral
    engine only).
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    alpha: float
    beta: float
    sigma: float
    label: str
    descriptor: dict

    def __call__(self, z) -> np.ndarray:
        return self.evaluator(np.asarray(z, dtype=complex))

    def scaled(self, c: complex) -> "PsiFunction":
        ev = self.evaluator
        desc = dict(self.descriptor)
        desc["scale"] = complex(desc.get("scale", 1.0)) * complex(c)
        return replace(self, evaluator=lambda z: c * ev(z),
                       label=f"{c:.6g}*{self.label}", descriptor=desc)

    def times(self, other: "PsiFunction") -> "PsiFunction":
        ev1, ev2 = self.evaluator, other.evaluator
        return PsiFunction(lambda z: ev1(z) * ev2(z),
                           alpha=self.alpha + other.alpha,
                           beta=min(self.beta + other.beta, DECAY_CAP),
                           sigma=min(self.sigma, other.sigma),
                           label=f"({self.label})*({other.label})",
                           descriptor={"family": "product",
                                       "factors": [self.descriptor,
                                                   other.descriptor]})

    def zpow(self, s: float) -> "PsiFunction":
        """Multiply by z^s (principal branch); s may be negative."""
        if s == 0:
            return self
        alpha = self.alpha + s
        if alpha <= 0:
            raise HypothesisError(
                f"z^{s} * {self.label} would vanish at order {alpha} <= 0 at 0")
        beta = self.beta if self.beta >= DECAY_CAP else self.beta - s
        if beta <= 0:
            raise HypothesisError(
                f"z^{s} * {self.label} would decay at order {beta} <= 0 at infinity")
        ev = self.evaluator
        return PsiFunction(lambda z: z ** s * ev(z), alpha=alpha,
                           beta=min(beta, DECAY_CAP), sigma=self.sigma,
                           label=f"z^{s:g}*{self.label}",
                           descriptor={"family": "zpow", "s": s,
                                       "base": self.descriptor})

    def power(self, k: int) -> "PsiFunction":
        ev = self.evaluator
        return PsiFunction(lambda z: ev(z) ** k, alpha=self.alpha * k,
                           beta=min(self.beta * k, DECAY_CAP) if self.beta > 0 else 0.0,
                           sigma=self.sigma, label=f"({self.label})^{k}",
                           descriptor={"family": "power", "k": k,
                                       "base": self.descriptor})

    def conj_reflect(self) -> "PsiFunction":
        """z -> conj(psi(conj z)); the symbol of the weighted adjoint."""
        ev = self.evaluator
        return replace(self, evaluator=lambda z: np.conj(ev(np.conj(z))),
                       label=f"{self.label}~")


def psi_make(family: str, a: float, b: float | None = None,
             scale: complex = 1.0) -> PsiFunction:
    """Built-in families: ``exp_monomial(a)`` is z^a e^{-z}, ``rational(a, b)``
    is z^a / (1+z)^{a+b}."""
    if family == "exp_monomial":
        if not a > 0:
            raise ValueError(f"exp_monomial needs a > 0, got {a}")
        ev = lambda z: scale * z ** a * np.exp(-z)
        return PsiFunction(ev, alpha=float(a), beta=DECAY_CAP,
                           sigma=0.49 * math.pi,
                           label=f"z^{a:g}e^-z",
                           descriptor={"family": "exp_monomial", "a": a,
                                       "scale": scale})
    if family == "rational":
        if b is None or not (a > 0 and b > 0):
            raise ValueError(f"rational needs a > 0 and b > 0, got a={a}, b={b}")
        ev = lambda z: scale * z ** a / (1.0 + z) ** (a + b)
        return PsiFunction(ev, alpha=float(a), beta=float(b),
                           sigma=0.75 * math.pi,
                           label=f"z^{a:g}/(1+z)^{a + b:g}",
                           descriptor={"family": "rational", "a": a, "b": b,
                                       "scale": scale})
    raise ValueError(f"unknown psi family {family!r}")


def psi_from_descriptor(desc: dict) -> PsiFunction:
    if desc["family"] in ("exp_monomial", "rational"):
        return psi_make(desc["family"], desc["a"], desc.get("b"),
                        desc.get("scale", 1.0))
    raise ValueError(f"cannot rebuild psi from descriptor {desc!r}")


def phi_one_minus_exp(M: int) -> PsiFunction:
    """(1 - e^{-z})^M: bounded on the sector, vanishing of order M at 0,
    no decay at infinity (spectral engine only)."""
    if M < 1:
        raise ValueError("M must be a positive integer")
    return PsiFunction(lambda z: (1.0 - np.exp(-z)) ** M, alpha=float(M),
                       beta=0.0, sigma=0.49 * math.pi, label=f"(1-e^-z)^{M}",
                       descriptor={"family": "one_minus_exp", "M": M})


def validate_decay(psi: PsiFunction, n_per_decade: int = 4) -> tuple[float, float]:
    """Sample |psi| along the rays arg z in {0, +/- sigma/2} over twelve
    decades and return (fitted envelope constant, fitted vanishing order)."""
    r = 10.0 ** np.arange(-6, 6 + 1e-9, 1.0 / n_per_decade)
    c_fit = 0.0
    beta_eff = min(psi.beta, 32.0)
    for ang in (0.0, psi.sigma / 2, -psi.sigma / 2):
        z = r * np.exp(1j * ang)
        vals = np.abs(psi(z))
        envelope = r ** psi.alpha / (1.0 + r ** (psi.alpha + beta_eff))
        ok = (envelope > 0) & np.isfinite(envelope)
        c_fit = max(c_fit, float(np.max(vals[ok] / envelope[ok])))
    small = r <= 1e-4
    z = r[small]
    logs = np.log(np.abs(psi(z)))
    slope = np.polyfit(np.log(z.real), logs, 1)[0]
    return c_fit, float(slope.real)


# -- contour quadrature ----------------------------------------------------------


@dataclass(frozen=True)
class Contour:
    """Two rays at angle +/- theta, geometric radial nodes.

    ``u_min``/``u_max`` window the *scaled* variable u = t^{2m} |lambda|, so
    one contour descriptor serves every scale; ``q`` is nodes per octave.
    """

    theta: float
    u_min: float
    u_max: float
    q: int

    def nodes(self) -> tuple[np.ndarray, float]:
        n_oct = int(math.ceil(math.log2(self.u_max / self.u_min)))
        u = self.u_min * 2.0 ** (np.arange(n_oct * self.q + 1) / self.q)
        return u, math.log(2.0) / self.q

    def refined(self) -> "Contour":
        return Contour(self.theta, self.u_min / 4.0, self.u_max * 4.0, self.q * 2)


_MAX_OCTAVES = 96


def default_contour(op: SectorialOperator, psi: PsiFunction, t: float = 1.0,
                    tol: float = 1e-9) -> Contour:
    """Window and angle adapted to the declared decay orders.

    The inner truncation error behaves like u_min^(alpha+1) plus a pole-gap
    term when eigenvalues fall below the window, so the window dips under
    the scaled spectral floor; the outer tail behaves like u_max^-beta.
    """
    if psi.beta <= 0:
        raise CalculusError(
            f"{psi.label} has no decay at infinity; contour quadrature "
            "does not converge (use the spectral engine)")
    sigma = min(psi.sigma, 0.47 * math.pi)
    if sigma <= op.sector_angle:
        raise CalculusError("psi validity angle does not clear the operator sector")
    theta = 0.5 * (op.sector_angle + sigma)
    s_lo, s_hi = op.spectral_bounds()
    t2m = float(t) ** op.order_2m
    u_lo = min(1e-6, tol ** (1.0 / (psi.alpha + 1.0)), 0.01 * t2m * s_lo)
    u_hi = max(1e6, 100.0 * t2m * s_hi)
    if psi.beta < DECAY_CAP:
        u_hi = max(u_hi, (3.0 / tol) ** (1.0 / psi.beta))
    if math.log2(u_hi / u_lo) > _MAX_OCTAVES:
        u_lo = u_hi / 2.0 ** _MAX_OCTAVES
    return Contour(theta, u_lo, u_hi, 32)


def _contour_apply(op: SectorialOperator, psi: PsiFunction, t: float,
                   f: np.ndarray, contour: Contour) -> np.ndarray:
    """Cauchy integral (2 pi i)^-1 \\oint psi(t^{2m} z) (z - L)^{-1} f dz."""
    u, dlog = contour.nodes()
    t2m = float(t) ** op.order_2m
    fr = op.range_part(f)
    solver = op.shift_solver()
    out = np.zeros(op.n, dtype=complex)
    for sgn in (1.0, -1.0):
        ray = np.exp(sgn * 1j * contour.theta)
        vals = psi(u * ray)
        keep = np.abs(vals) > 1e-14 * max(float(np.abs(vals).max()), 1e-300)
        if not keep.any():
            continue
        shifts = u[keep] * ray / t2m
        sols = solver.solve_many(shifts, fr)
        coeff = (-sgn) * dlog * vals[keep] * u[keep] / t2m * ray
        out += sols @ coeff
    return out / (2j * math.pi)


def contour_refinement_delta(op, psi, t, f, contour: Contour) -> float:
    """Relative change under one simultaneous q-doubling and window widening."""
    base = _contour_apply(op, psi, t, f, contour)
    fine = _contour_apply(op, psi, t, f, contour.refined())
    scale = max(np.linalg.norm(fine), 1e-300)
    return float(np.linalg.norm(fine - base) / scale)


# -- spectral engine -------------------------------------------------------------


def _oracle_or_raise(op: SectorialOperator):
    oracle = op.oracle()
    if not oracle.valid:
        raise CalculusError(
            f"spectral oracle invalid (cond={oracle.condition:.2e}); "
            "only the contour path is available")
    return oracle


def _eig_apply(op: SectorialOperator, scalars: np.ndarray, f: np.ndarray,
               keep_kernel: bool = False) -> np.ndarray:
    """V diag(scalars) V^{-1} applied to the range part of f."""
    oracle = _oracle_or_raise(op)
    fk = op.kernel_part(f)
    w = oracle.inv @ (np.asarray(f, dtype=complex) - fk)
    out = oracle.right @ (scalars * w)
    return out + fk if keep_kernel else out


def _eig_field(op: SectorialOperator, scalar_matrix: np.ndarray, f: np.ndarray,
               keep_kernel: bool = False) -> np.ndarray:
    """Batched version: scalar_matrix is (N, K), output field is (N, K)."""
    oracle = _oracle_or_raise(op)
    fk = op.kernel_part(f)
    w = oracle.inv @ (np.asarray(f, dtype=complex) - fk)
    out = oracle.right @ (scalar_matrix * w[:, None])
    return out + fk[:, None] if keep_kernel else out


# -- public operations -----------------------------------------------------------


def apply_psi(op: SectorialOperator, psi: PsiFunction, t: float, f,
              engine: str = "auto", contour: Contour | None = None,
              tol: float = 1e-9) -> np.ndarray:
    """psi(t^{2m} L) f.

    ``engine="auto"`` prefers the spectral oracle and falls back to contour
    quadrature; pass ``"contour"`` or ``"spectral"`` to force a path.
    """
    if not t > 0:
        raise CalculusError("scale t must be positive")
    if psi.sigma <= op.sector_angle:
        raise CalculusError("psi validity angle does not clear the operator sector")
    f = np.asarray(f, dtype=complex)
    if engine == "auto":
        engine = "spectral" if op.oracle_valid() else "contour"
    if engine == "spectral":
        lam = op.oracle().eigenvalues
        return _eig_apply(op, psi(t ** op.order_2m * lam), f)
    if engine == "contour":
        if contour is None:
            contour = default_contour(op, psi, t, tol)
        return _contour_apply(op, psi, t, f, contour)
    raise CalculusError(f"unknown engine {engine!r}")


def psi_field(op: SectorialOperator, psi: PsiFunction, f, tgrid: TGrid,
              scale_power: int | None = None) -> np.ndarray:
    """Field (x, k) -> psi(t_k^{2m} L) f(x) over the whole grid, batched."""
    lam = _oracle_or_raise(op).eigenvalues
    power = op.order_2m if scale_power is None else scale_power
    u = np.multiply.outer(lam, tgrid.nodes.astype(float) ** power)
    return _eig_field(op, psi(u), np.asarray(f, dtype=complex))


def apply_semigroup(op: SectorialOperator, s: float, f,
                    engine: str = "auto", tol: float = 1e-8) -> np.ndarray:
    """e^{-s L} f; kernel components pass through unchanged.

    The contour fallback splits off (I + sL)^{-1} (a single exact resolvent
    solve) and quadratures the remainder e^{-z} - (1+z)^{-1}, which vanishes
    to second order at 0 and restores integrability on the rays.
    """
    if not s > 0:
        raise CalculusError("semigroup time must be positive")
    f = np.asarray(f, dtype=complex)
    if engine == "auto":
        engine = "spectral" if op.oracle_valid() else "contour"
    if engine == "spectral":
        lam = op.oracle().eigenvalues
        return _eig_apply(op, np.exp(-s * lam), f, keep_kernel=True)
    if engine == "contour":
        remainder = PsiFunction(lambda z: np.exp(-z) - 1.0 / (1.0 + z),
                                alpha=2.0, beta=1.0, sigma=0.49 * math.pi,
                                label="e^-z-(1+z)^-1",
                                descriptor={"family": "semigroup_remainder"})
        fk = op.kernel_part(f)
        fr = f - fk
        # emulate t^{2m} = s by applying at t = s^(1/2m)
        t_eff = s ** (1.0 / op.order_2m)
        contour = default_contour(op, remainder, t_eff, tol)
        part = _contour_apply(op, remainder, t_eff, fr, contour)
        resolvent_part = -np.linalg.solve(
            (-1.0 / s) * np.eye(op.n) - op.matrix, fr) / s
        return fk + part + resolvent_part
    raise CalculusError(f"unknown engine {engine!r}")


def semigroup_field(op: SectorialOperator, f, tgrid: TGrid,
                    scale_power: int | None = None) -> np.ndarray:
    """Field (x, k) -> e^{-t_k^{2m} L} f(x), kernel conserved exactly."""
    lam = _oracle_or_raise(op).eigenvalues
    power = op.order_2m if scale_power is None else scale_power
    u = np.multiply.outer(lam, tgrid.nodes.astype(float) ** power)
    return _eig_field(op, np.exp(-u), np.asarray(f, dtype=complex),
                      keep_kernel=True)


def apply_fractional_power(op: SectorialOperator, s: float, f) -> np.ndarray:
    """L^{s/2m} f via the principal branch on the oracle; kernel maps to 0."""
    if not 0 < s:
        raise CalculusError("fractional exponent must be positive")
    try:
        oracle = _oracle_or_raise(op)
    except (CalculusError, OperatorError) as exc:
        raise CalculusError(
            "fractional powers need a valid dense spectral decomposition; "
            f"unsupported path: {exc}") from exc
    lam = oracle.eigenvalues
    expo = s / op.order_2m
    floor = 1e-12 * max(float(np.abs(lam).max()), 1e-300)
    vals = np.where(np.abs(lam) <= floor, 0.0,
                    np.exp(expo * np.log(np.where(np.abs(lam) <= floor, 1.0, lam))))
    return _eig_apply(op, vals, np.asarray(f, dtype=complex))


def quadratic_norm(op: SectorialOperator, psi: PsiFunction, f,
                   tgrid: TGrid) -> float:
    """Discrete square function (sum_k ||psi(t_k L) f||^2 dlog t)^{1/2}.

    Scales are applied homogeneously in t (not t^{2m}); build the grid with
    ``covering_tgrid(op, power=1)`` so t * lambda sweeps the decay window.
    """
    f = np.asarray(f, dtype=complex)
    oracle = _oracle_or_raise(op)
    lam = oracle.eigenvalues
    u = np.multiply.outer(lam, tgrid.nodes.astype(float))
    vals = psi(u)
    fr = op.range_part(f)
    w = oracle.inv @ fr
    if oracle.hermitian:
        # orthonormal eigenbasis: column norms split over eigencoefficients
        mu0 = float(op.space.weights[0])
        norms2 = mu0 * np.sum(np.abs(vals * w[:, None]) ** 2, axis=0)
    else:
        field = oracle.right @ (vals * w[:, None])
        norms2 = (op.space.weights @ (np.abs(field) ** 2))
    return float(math.sqrt(np.sum(norms2) * tgrid.dlog))


# -- pairing normalization and reconstruction -------------------------------------


def pairing_integral(psi: PsiFunction, psi_tilde: PsiFunction) -> complex:
    """Adaptive quadrature of the multiplicative pairing of the two symbols
    along the positive axis."""
    alpha = psi.alpha + psi_tilde.alpha
    beta = min(psi.beta, 64.0) + min(psi_tilde.beta, 64.0)
    x_lo = -(34.0 / alpha) - 2.0
    x_hi = 34.0 / beta + 4.0
    ev = lambda x: psi(np.exp(x)) * psi_tilde(np.exp(x))
    re = quad(lambda x: float(np.real(ev(x))), x_lo, x_hi, limit=400,
              epsabs=1e-13, epsrel=1e-12)[0]
    im = quad(lambda x: float(np.imag(ev(x))), x_lo, x_hi, limit=400,
              epsabs=1e-13, epsrel=1e-12)[0]
    return complex(re, im)


def normalize_pair(psi: PsiFunction, psi_tilde: PsiFunction) -> PsiFunction:
    """Rescale the second symbol so the multiplicative pairing equals 1."""
    integral = pairing_integral(psi, psi_tilde)
    if abs(integral) < 1e-14:
        raise ValueError("pairing integral vanishes; the pair cannot be normalized")
    scaled = psi_tilde.scaled(1.0 / integral)
    check = pairing_integral(psi, scaled)
    if abs(check - 1.0) > 1e-10:
        raise CalculusError(f"normalization check failed: pairing = {check}")
    return scaled


def calderon_reconstruct(op: SectorialOperator, psi: PsiFunction,
                         psi_tilde: PsiFunction, f, tgrid: TGrid,
                         engine: str = "spectral") -> tuple[np.ndarray, float]:
    """Truncated reproducing sum sum_k (psi psi_tilde)(t_k^{2m} L) f * 2m dlog t.

    Returns the reconstruction and its relative residual against the range
    part of f.  The factor 2m compensates the substitution t -> t^{2m}
    against the dt/t normalization of the pairing (the single place the
    Jacobian enters).
    """
    f = np.asarray(f, dtype=complex)
    product = psi.times(psi_tilde)
    weight = op.order_2m * tgrid.dlog
    if engine == "spectral":
        lam = _oracle_or_raise(op).eigenvalues
        u = np.multiply.outer(lam, tgrid.nodes.astype(float) ** op.order_2m)
        scalars = product(u).sum(axis=1) * weight
        recon = _eig_apply(op, scalars, f)
    else:
        recon = np.zeros(op.n, dtype=complex)
        for t in tgrid.nodes:
            recon = recon + apply_psi(op, product, t, f, engine=engine) * weight
    target = op.range_part(f)
    scale = max(op.space.norm(target), 1e-300)
    residual = op.space.norm(recon - target) / scale
    return recon, float(residual)


# -- off-diagonal measurements ----------------------------------------------------


@dataclass
class OffDiagReport:
    gamma: float | None
    constant: float
    points: list
    distance: float
    saturated: bool


class PsiFamily:
    """t -> psi(t^{2m} L) together with its weighted adjoint."""

    def __init__(self, op: SectorialOperator, psi: PsiFunction):
        self.op = op
        self.psi = psi
        self._adj = op.adjoint()
        self._psi_star = psi.conj_reflect()

    def apply(self, t, v):
        return apply_psi(self.op, self.psi, t, v)

    def apply_adjoint(self, t, v):
        return apply_psi(self._adj, self._psi_star, t, v)


class SemigroupFamily:
    """t -> e^{-t^{2m} L} and its weighted adjoint."""

    def __init__(self, op: SectorialOperator):
        self.op = op
        self._adj = op.adjoint()

    def apply(self, t, v):
        return apply_semigroup(self.op, float(t) ** self.op.order_2m, v)

    def apply_adjoint(self, t, v):
        return apply_semigroup(self._adj, float(t) ** self.op.order_2m, v)


def _compressed_norm(family, t, E, F, weights, n, rng, probes=8, steps=20) -> float:
    """||restrict_F o family(t) o extend_E|| by power iteration on A*A."""
    best = 0.0
    for _ in range(probes):
        v = np.zeros(n, dtype=complex)
        v[E] = rng.standard_normal(E.size) + 1j * rng.standard_normal(E.size)
        nv = math.sqrt(float(np.sum(weights[E] * np.abs(v[E]) ** 2)))
        if nv == 0:
            continue
        v /= nv
        sigma2 = 0.0
        for _ in range(steps):
            w = family.apply(t, v)
            wf = np.zeros(n, dtype=complex)
            wf[F] = w[F]
            back = family.apply_adjoint(t, wf)
            z = np.zeros(n, dtype=complex)
            z[E] = back[E]
            sigma2 = float(np.real(np.sum(weights * z * np.conj(v))))
            nz = math.sqrt(float(np.sum(weights[E] * np.abs(z[E]) ** 2)))
            if nz == 0:
                sigma2 = 0.0
                break
            v = z / nz
        best = max(best, math.sqrt(max(sigma2, 0.0)))
    return best


def measure_offdiag(family, space, E, F, tgrid: TGrid,
                    rng: np.random.Generator, probes: int = 6,
                    steps: int = 20) -> OffDiagReport:
    """Fit the off-diagonal decay order of an operator family between two
    separated sets: log norm against -gamma log(1 + dist^{2m}/t^{2m})."""
    E = np.asarray(E, dtype=int)
    F = np.asarray(F, dtype=int)
    order = family.op.order_2m
    dist = set_distance(space, E, F)
    points = []
    for t in tgrid.nodes:
        nrm = _compressed_norm(family, t, E, F, space.weights,
                               space.n_points, rng, probes, steps)
        x = math.log1p((dist / t) ** order) if dist > 0 else 0.0
        points.append((float(t), x, nrm))
    norms = np.array([p[2] for p in points])
    top = float(norms.max()) if norms.size else 0.0
    if dist == 0:
        return OffDiagReport(None, top, points, 0.0, saturated=False)
    usable = [(x, nrm) for (_, x, nrm) in points
              if nrm > 1e-14 and nrm > 1e-12 * top and x > 0.05]
    usable.sort(key=lambda p: p[0])
    # the envelope peaks where the family norm crosses over; the decay order
    # is the slope of the decaying branch beyond the peak
    if len(usable) >= 4:
        peak = int(np.argmax([n for (_, n) in usable]))
        if peak < len(usable) - 3:
            usable = usable[peak + 1:]
    if len(usable) < 2:
        return OffDiagReport(None, top, points, dist, saturated=True)
    xs = np.array([u[0] for u in usable])
    ys = np.log([u[1] for u in usable])
    slope, intercept = np.polyfit(xs, ys, 1)
    return OffDiagReport(float(-slope), float(np.exp(intercept)), points,
                         dist, saturated=False)


@dataclass
class OffDiagLpReport:
    p_tilde: float
    sup_ratio: float
    eps_fit: float
    per_j: dict
    n_exponent: float


def measure_offdiag_lp(op: SectorialOperator, p_tilde: float, tgrid: TGrid,
                       rng: np.random.Generator, n_balls: int = 4,
                       probes: int = 6, n_scales: int = 4) -> OffDiagLpReport:
    """Annular L^p -> L^2 diagnostics for the semigroup at scale-matched balls.

    For balls of radius r = t^{1/2m} the quantity
    ||e^{-tL} 1_{S_j} f||_{L2(B)} / (2^{-j n/p} V(B)^{1/2 - 1/p} ||f||_{Lp(S_j)})
    is recorded per shell index j; the fitted extra decay rate across j is
    returned alongside the overall sup.
    """
    if not 1.0 < p_tilde < 2.0:
        raise ValueError("p_tilde must lie in (1, 2)")
    space = op.space
    n_exp = max(doubling_exponent(space), 0.1)
    scales = tgrid.nodes[np.linspace(0, tgrid.size - 1, n_scales).astype(int)]
    per_j: dict[int, float] = {}
    sup_ratio = 0.0
    for t in scales:
        s = float(t) ** op.order_2m
        r = float(t)
        if r <= space.min_spacing or r > space.diameter:
            continue
        centers = rng.integers(0, space.n_points, size=n_balls)
        for c in centers:
            ball = Ball(int(c), r)
            members = space.ball_members(int(c), r)
            if members.size == 0:
                continue
            v_b = float(space.weights[members].sum())
            j = 0
            while 2.0 ** max(j - 1, 0) * r <= 2 * space.diameter:
                shell = space_annulus(space, ball, j)
                if shell.size == 0:
                    j += 1
                    continue
                for _ in range(probes):
                    f = np.zeros(space.n_points, dtype=complex)
                    f[shell] = rng.standard_normal(shell.size) \
                        + 1j * rng.standard_normal(shell.size)
                    g = apply_semigroup(op, s, f)
                    num = space.norm(g, subset=members)
                    den = (2.0 ** (-j * n_exp / p_tilde)
                           * v_b ** (0.5 - 1.0 / p_tilde)
                           * space.norm_p(f, p_tilde, subset=shell))
                    if den <= 0:
                        continue
                    ratio = num / den
                    sup_ratio = max(sup_ratio, ratio)
                    per_j[j] = max(per_j.get(j, 0.0), ratio)
                j += 1
    js = sorted(k for k, v in per_j.items() if v > 1e-13)
    if len(js) >= 2:
        slope = np.polyfit(np.array(js, dtype=float),
                           np.log2([per_j[j] for j in js]), 1)[0]
        eps_fit = float(max(-slope, 0.0))
    else:
        eps_fit = 0.0
    return OffDiagLpReport(p_tilde, float(sup_ratio), eps_fit, per_j, n_exp)


@dataclass
class ConservationReport:
    semigroup_deviation: float
    psi_deviation: float


def conservation_check(op: SectorialOperator, psi: PsiFunction,
                       tgrid: TGrid) -> ConservationReport:
    """max_t ||e^{-tL} 1 - 1|| and max_t ||psi(t^{2m}L) 1|| over the grid."""
    if not psi.alpha > 0:
        raise HypothesisError("conservation check needs a symbol vanishing at 0")
    ones = np.ones(op.n, dtype=complex)
    sg_dev = 0.0
    for t in tgrid.nodes:
        sg = apply_semigroup(op, float(t), ones)
        sg_dev = max(sg_dev, op.space.norm(sg - ones))
    field = psi_field(op, psi, ones, tgrid)
    psi_dev = float(np.max(np.sqrt(op.space.weights @ (np.abs(field) ** 2))))
    return ConservationReport(float(sg_dev), psi_dev)
