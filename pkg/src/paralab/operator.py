"""Discrete sectorial operators in divergence form.

The generator is assembled from per-edge complex coefficients a_e with
Re(a_e) >= delta > 0, which confines the numerical range to the closed
sector of half-angle max|arg a_e| < pi/2.  Periodic assembly has zero row
sums (constants span the kernel, the semigroup conserves them); Dirichlet
assembly couples boundary nodes to a zero exterior and has trivial kernel.

A dense eigendecomposition serves as the validation oracle for every
functional-calculus path, and a complex Schur form provides fast multishift
resolvent solves for contour quadrature.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .space import MetricMeasureSpace


class OperatorError(ValueError):
    """Invalid operator construction or query."""


class ResolventError(RuntimeError):
    """Shifted solve failed; carries a crude distance-to-spectrum estimate."""

    def __init__(self, message, distance_estimate=None):
        super().__init__(message)
        self.distance_estimate = distance_estimate


@dataclass(frozen=True)
class CoefficientField:
    """Per-edge complex coefficients with uniform ellipticity."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values",
                           np.ascontiguousarray(self.values, dtype=complex))
        if self.values.ndim != 1 or self.values.size == 0:
            raise OperatorError("coefficient field must be a nonempty vector")
        if np.any(self.values.real <= 0):
            raise OperatorError("ellipticity violated: some Re(a_e) <= 0")

    @property
    def ellipticity(self) -> float:
        return float(self.values.real.min())

    @property
    def magnitude(self) -> float:
        return float(np.abs(self.values).max())

    @property
    def angle(self) -> float:
        return float(np.abs(np.angle(self.values)).max())


@dataclass
class SpectralOracle:
    """Dense eigendecomposition L = V diag(lam) V^{-1} with a validity flag."""

    eigenvalues: np.ndarray
    right: np.ndarray
    inv: np.ndarray
    condition: float
    reconstruction_residual: float
    hermitian: bool

    @property
    def valid(self) -> bool:
        return self.condition <= 1e8 and self.reconstruction_residual <= 1e-10


@dataclass
class SectorialityReport:
    c_sigma: float
    worst_zeta: complex
    sigma: float
    samples: int


class ShiftedSolver:
    """Multishift resolvent solves via a complex Schur reduction.

    One orthogonal reduction L = U T U^H is reused for every shift; each
    (zeta I - L)^{-1} f then costs a triangular back-substitution, done for
    all shifts at once with only the diagonal changing.
    """

    def __init__(self, matrix: np.ndarray):
        self.T, self.U = sla.schur(np.asarray(matrix, dtype=complex),
                                   output="complex")

    def solve_many(self, shifts: np.ndarray, f: np.ndarray) -> np.ndarray:
        """Columns (zeta_j I - L)^{-1} f for every shift zeta_j."""
        shifts = np.asarray(shifts, dtype=complex)
        y = self.U.conj().T @ np.asarray(f, dtype=complex)
        n = y.shape[0]
        x = np.empty((n, shifts.size), dtype=complex)
        T = self.T
        for i in range(n - 1, -1, -1):
            acc = y[i] if i == n - 1 else y[i] + T[i, i + 1:] @ x[i + 1:, :]
            x[i, :] = acc / (shifts - T[i, i])
        return self.U @ x


class SectorialOperator:
    """Dense discrete operator with weighted-adjoint, kernel projector and
    lazily built spectral oracle."""

    def __init__(self, space: MetricMeasureSpace, matrix: np.ndarray,
                 order_2m: int = 2, sector_angle: float = 0.0, label: str = "",
                 kernel_basis: np.ndarray | None = None, dense_budget: int = 4096):
        matrix = np.ascontiguousarray(matrix, dtype=complex)
        if matrix.shape != (space.n_points, space.n_points):
            raise OperatorError("matrix shape does not match the space")
        if order_2m < 2 or order_2m % 2:
            raise OperatorError("homogeneity order must be a positive even integer")
        if not 0 <= sector_angle < math.pi / 2:
            raise OperatorError("sector angle must lie in [0, pi/2)")
        self.space = space
        self.matrix = matrix
        self.order_2m = int(order_2m)
        self.sector_angle = float(sector_angle)
        self.label = label
        self.dense_budget = dense_budget
        if kernel_basis is not None:
            kernel_basis = np.ascontiguousarray(kernel_basis, dtype=complex)
            if kernel_basis.ndim != 2:
                raise OperatorError("kernel basis must be 2d (points x dim)")
        self.kernel_basis = kernel_basis
        self.descriptor: dict = {"label": label, "order_2m": order_2m}
        self._adjoint_matrix: np.ndarray | None = None
        self._oracle: SpectralOracle | None = None
        self._solver: ShiftedSolver | None = None
        self._adjoint_view: SectorialOperator | None = None
        self._kernel_proj: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def apply(self, f) -> np.ndarray:
        return self.matrix @ np.asarray(f, dtype=complex)

    @property
    def adjoint_matrix(self) -> np.ndarray:
        if self._adjoint_matrix is None:
            w = self.space.weights
            self._adjoint_matrix = (self.matrix.conj().T * w[None, :]) / w[:, None]
        return self._adjoint_matrix

    def apply_adjoint(self, f) -> np.ndarray:
        return self.adjoint_matrix @ np.asarray(f, dtype=complex)

    # -- kernel handling ----------------------------------------------------

    def _projector(self) -> np.ndarray | None:
        if self.kernel_basis is None:
            return None
        if self._kernel_proj is None:
            w = self.space.weights
            k = self.kernel_basis
            gram = k.conj().T @ (w[:, None] * k)
            self._kernel_proj = k @ np.linalg.solve(gram, k.conj().T * w[None, :])
        return self._kernel_proj

    def kernel_part(self, f) -> np.ndarray:
        """Weighted-orthogonal projection onto ker(L)."""
        f = np.asarray(f, dtype=complex)
        proj = self._projector()
        if proj is None:
            return np.zeros_like(f)
        return proj @ f

    def range_part(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=complex)
        return f - self.kernel_part(f)

    # -- oracle and solvers --------------------------------------------------

    def oracle(self) -> SpectralOracle:
        if self._oracle is None:
            self._oracle = spectral_oracle(self)
        return self._oracle

    def oracle_valid(self) -> bool:
        try:
            return self.oracle().valid
        except OperatorError:
            return False

    def shift_solver(self) -> ShiftedSolver:
        if self._solver is None:
            self._solver = ShiftedSolver(self.matrix)
        return self._solver

    def spectral_bounds(self) -> tuple[float, float]:
        """(smallest nonzero |eigenvalue|, largest |eigenvalue|).

        Falls back to a Gershgorin upper bound when the dense oracle is
        unavailable.
        """
        try:
            lam = np.abs(self.oracle().eigenvalues)
        except OperatorError:
            radius = np.abs(self.matrix).sum(axis=1).max()
            return radius * 1e-6, float(radius)
        hi = float(lam.max()) if lam.max() > 0 else 1.0
        nz = lam[lam > 1e-12 * hi]
        lo = float(nz.min()) if nz.size else hi
        return lo, hi

    def adjoint(self) -> "SectorialOperator":
        """Operator view of the weighted adjoint, sharing the oracle."""
        if self._adjoint_view is None:
            adj = SectorialOperator(self.space, self.adjoint_matrix,
                                    order_2m=self.order_2m,
                                    sector_angle=self.sector_angle,
                                    label=self.label + "*",
                                    kernel_basis=(None if self.kernel_basis is None
                                                  else self.kernel_basis.conj()),
                                    dense_budget=self.dense_budget)
            if self._oracle is not None and self._oracle.valid:
                o = self._oracle
                w = self.space.weights
                # L* = W^{-1} L^H W  =>  eigvecs W^{-1} V^{-H}, eigvals conj
                right = (o.inv.conj().T) / w[:, None]
                inv = o.right.conj().T * w[None, :]
                adj._oracle = SpectralOracle(o.eigenvalues.conj(), right, inv,
                                             o.condition,
                                             o.reconstruction_residual,
                                             o.hermitian)
            adj._adjoint_view = self
            self._adjoint_view = adj
        return self._adjoint_view


# -- grid assembly --------------------------------------------------------------


def grid_edges(dims, boundary: str):
    """Edge list for the divergence-form stencil.

    Returns ``(pairs, boundary_nodes)``: interior/wrap edges as index pairs in
    axis-major order, and for Dirichlet assembly the node indices of the
    virtual half-edges tying the grid to the zero exterior (two per grid line,
    appended after the interior edges in coefficient order).
    """
    if boundary not in ("periodic", "dirichlet"):
        raise OperatorError(f"unknown boundary {boundary!r}")
    dims = [int(d) for d in dims]
    n_total = int(np.prod(dims))
    pairs = []
    half_edges = []
    stride_after = n_total
    for n_axis in dims:
        stride_after //= n_axis
        axis_idx = (np.arange(n_total) // stride_after) % n_axis
        neighbor = np.arange(n_total) + stride_after
        if boundary == "periodic":
            wraps = axis_idx == n_axis - 1
            neighbor = np.where(wraps, np.arange(n_total) - (n_axis - 1) * stride_after,
                                neighbor)
            for i, j in zip(np.arange(n_total), neighbor):
                pairs.append((int(i), int(j)))
        else:
            inner = axis_idx < n_axis - 1
            for i in np.flatnonzero(inner):
                pairs.append((int(i), int(i + stride_after)))
            half_edges.extend(int(i) for i in np.flatnonzero(axis_idx == 0))
            half_edges.extend(int(i) for i in np.flatnonzero(axis_idx == n_axis - 1))
    return pairs, half_edges


def grid_edge_count(dims, boundary: str) -> int:
    pairs, half = grid_edges(dims, boundary)
    return len(pairs) + len(half)


def constant_coefficients(dims, boundary: str, value: complex) -> CoefficientField:
    return CoefficientField(np.full(grid_edge_count(dims, boundary), value,
                                    dtype=complex))


def random_coefficients(dims, boundary: str, rng: np.random.Generator,
                        real_range=(1.0, 2.0), imag_amplitude: float = 0.0
                        ) -> CoefficientField:
    count = grid_edge_count(dims, boundary)
    re = rng.uniform(real_range[0], real_range[1], size=count)
    im = imag_amplitude * rng.uniform(-1.0, 1.0, size=count)
    return CoefficientField(re + 1j * im)


def build_divergence_form(space: MetricMeasureSpace, coeffs: CoefficientField,
                          boundary: str = "periodic") -> SectorialOperator:
    """Second-order stencil for -div(a grad) with complex edge coefficients."""
    descriptor = space.to_descriptor()
    if "dims" not in descriptor:
        raise OperatorError("divergence-form assembly needs a grid space")
    dims = descriptor["dims"]
    h = descriptor["spacing"]
    if boundary == "periodic" and space.topology != "periodic":
        raise OperatorError("periodic assembly needs a periodic space")
    pairs, half_edges = grid_edges(dims, boundary)
    expected = len(pairs) + len(half_edges)
    if coeffs.values.size != expected:
        raise OperatorError(f"expected {expected} edge coefficients, "
                            f"got {coeffs.values.size}")

    n = space.n_points
    mat = np.zeros((n, n), dtype=complex)
    for (i, j), a in zip(pairs, coeffs.values[:len(pairs)]):
        mat[i, i] += a
        mat[j, j] += a
        mat[i, j] -= a
        mat[j, i] -= a
    for i, a in zip(half_edges, coeffs.values[len(pairs):]):
        mat[i, i] += a
    mat /= h * h

    kernel = np.ones((n, 1), dtype=complex) if boundary == "periodic" else None
    op = SectorialOperator(space, mat, order_2m=2, sector_angle=coeffs.angle,
                           label=f"divergence_form[{boundary}]",
                           kernel_basis=kernel)
    op.descriptor.update({"kind": "divergence_form", "boundary": boundary,
                          "dims": dims, "spacing": h})
    return op


def make_power_operator(op: SectorialOperator, extra_power: int) -> SectorialOperator:
    """Emulate a higher-order generator by an integer matrix power.

    The homogeneity order multiplies accordingly, so every t^{2m} scaling
    downstream picks up the new order automatically.
    """
    if extra_power < 1:
        raise OperatorError("power must be a positive integer")
    angle = op.sector_angle * extra_power
    if angle >= math.pi / 2:
        raise OperatorError("power would push the sector angle past pi/2")
    mat = np.linalg.matrix_power(op.matrix, extra_power)
    out = SectorialOperator(op.space, mat, order_2m=op.order_2m * extra_power,
                            sector_angle=angle, label=f"{op.label}^{extra_power}",
                            kernel_basis=op.kernel_basis)
    out.descriptor = dict(op.descriptor, power=extra_power)
    return out


# -- solves and diagnostics -----------------------------------------------------


def resolvent_apply(op: SectorialOperator, zeta: complex, f,
                    check: bool = True) -> np.ndarray:
    """Direct dense solve of (zeta I - L) g = f with residual verification."""
    f = np.asarray(f, dtype=complex)
    a = zeta * np.eye(op.n) - op.matrix
    try:
        with warnings.catch_warnings():
            # conditioning is judged by the residual check below
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            g = sla.solve(a, f)
    except sla.LinAlgError as exc:
        raise ResolventError(f"resolvent solve failed at zeta={zeta}: {exc}") from exc
    if check:
        nf = np.linalg.norm(f)
        residual = np.linalg.norm(a @ g - f)
        if nf > 0 and residual > 1e-10 * nf:
            ng = np.linalg.norm(g)
            dist_est = nf / ng if ng > 0 else None
            raise ResolventError(
                f"resolvent residual {residual:.2e} at zeta={zeta}; "
                f"distance-to-spectrum estimate {dist_est}",
                distance_estimate=dist_est)
    return g


def spectral_oracle(op: SectorialOperator) -> SpectralOracle:
    """Dense eigendecomposition used as an independent validation oracle."""
    if op.n > op.dense_budget:
        raise OperatorError(f"dense oracle budget exceeded: {op.n} > {op.dense_budget}")
    mat = op.matrix
    uniform = np.allclose(op.space.weights, op.space.weights[0])
    hermitian = uniform and bool(np.allclose(mat, mat.conj().T, atol=1e-13 * _scale(mat)))
    if hermitian:
        lam, v = np.linalg.eigh(mat)
        inv = v.conj().T
        cond = 1.0
        lam = lam.astype(complex)
    else:
        lam, v = sla.eig(mat)
        order = np.argsort(lam.real + 1e-9 * np.abs(lam.imag))
        lam = lam[order]
        v = v[:, order]
        inv = np.linalg.inv(v)
        cond = float(np.linalg.cond(v))
    recon = np.linalg.norm(v @ (lam[:, None] * inv) - mat) / max(_scale(mat), 1e-300)
    return SpectralOracle(lam, v, inv, cond, float(recon), hermitian)


def _scale(mat) -> float:
    return float(np.linalg.norm(mat))


def _power_norm(apply_fn, adjoint_fn, weights, n, rng, probes: int = 8,
                steps: int = 20) -> float:
    """Weighted operator-norm estimate by power iteration on A*A."""
    best = 0.0
    for _ in range(probes):
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        nv = np.sqrt(np.sum(weights * np.abs(v) ** 2))
        if nv == 0:
            continue
        v /= nv
        sigma2 = 0.0
        for _ in range(steps):
            w = adjoint_fn(apply_fn(v))
            sigma2 = float(np.real(np.sum(weights * w * np.conj(v))))
            nw = np.sqrt(np.sum(weights * np.abs(w) ** 2))
            if nw == 0:
                sigma2 = 0.0
                break
            v = w / nw
        best = max(best, math.sqrt(max(sigma2, 0.0)))
    return best


def verify_sectoriality(op: SectorialOperator, sigma: float,
                        ray_samples: int = 6, magnitude_samples: int = 6,
                        rng: np.random.Generator | None = None,
                        probes: int = 4, steps: int = 20) -> SectorialityReport:
    """Measure C_sigma = sup |zeta| ||(zeta - L)^{-1}|| over the sector boundary.

    Resolvent norms are estimated by power iteration on shared LU factors;
    the adjoint solve reuses the factorization transposed.
    """
    if not sigma > op.sector_angle:
        raise OperatorError("sigma must exceed the operator sector angle")
    if rng is None:
        rng = np.random.default_rng(1)
    lo, hi = op.spectral_bounds()
    mags = np.exp(np.linspace(math.log(lo * 0.03), math.log(hi * 30.0),
                              magnitude_samples))
    angles = np.linspace(sigma, math.pi, ray_samples)
    w = op.space.weights
    c_best, worst = 0.0, complex(mags[0])
    for ang in angles:
        for sgn in (1.0, -1.0) if ang < math.pi else (1.0,):
            for m in mags:
                zeta = m * np.exp(sgn * 1j * ang)
                a = zeta * np.eye(op.n) - op.matrix
                lu, piv = sla.lu_factor(a)
                apply_fn = lambda v: sla.lu_solve((lu, piv), v)
                adjoint_fn = lambda v: sla.lu_solve((lu, piv), v * w, trans=2) / w
                nrm = _power_norm(apply_fn, adjoint_fn, w, op.n, rng,
                                  probes=probes, steps=steps)
                val = abs(zeta) * nrm
                if val > c_best:
                    c_best, worst = val, zeta
    return SectorialityReport(c_sigma=c_best, worst_zeta=worst, sigma=sigma,
                              samples=ray_samples * magnitude_samples)
