import numpy as np
import pytest

import paralab as pl


@pytest.fixture(scope="session")
def ring64():
    """1D periodic grid, 64 nodes, unit spacing."""
    return pl.build_grid_space([64], 1.0, "periodic")


@pytest.fixture(scope="session")
def lap64(ring64):
    """Constant-coefficient periodic second-order operator on ring64."""
    coeffs = pl.constant_coefficients([64], "periodic", 1.0)
    return pl.build_divergence_form(ring64, coeffs, "periodic")


@pytest.fixture(scope="session")
def complex_op32():
    """Non-self-adjoint operator: complex coefficients on a 32-ring."""
    space = pl.build_grid_space([32], 1.0, "periodic")
    rng = np.random.default_rng(42)
    coeffs = pl.random_coefficients([32], "periodic", rng,
                                    real_range=(1.0, 2.0), imag_amplitude=0.5)
    return pl.build_divergence_form(space, coeffs, "periodic")


@pytest.fixture(scope="session")
def dirichlet_op16():
    space = pl.build_grid_space([16], 1.0, "bounded")
    coeffs = pl.constant_coefficients([16], "dirichlet", 1.0)
    return pl.build_divergence_form(space, coeffs, "dirichlet")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
