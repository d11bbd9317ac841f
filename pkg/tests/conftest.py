"""Shared fixtures: kernels and damping functions reused across test modules."""

import numpy as np
import pytest

from shearlab import kernels as sk


@pytest.fixture(scope="session")
def de_full():
    """Full reptation kernel (no rate cutoff, analytic series tail)."""
    return sk.doi_edwards_kernel()


@pytest.fixture(scope="session")
def de_n100():
    """Reptation kernel truncated at rate cutoff 100 (atoms 9, 25, 49, 81)."""
    return sk.doi_edwards_kernel(truncation_n=100)


@pytest.fixture(scope="session")
def de_n1e4():
    return sk.doi_edwards_kernel(truncation_n=1e4)


@pytest.fixture(scope="session")
def single_atom():
    """Unit exponential kernel a(t) = exp(-t)."""
    return sk.RelaxationKernel(sk.MeasureSpec.from_atoms([(1.0, 1.0)]))


@pytest.fixture(scope="session")
def two_atom():
    return sk.RelaxationKernel(sk.MeasureSpec.from_atoms([(1.0, 0.75), (4.0, 0.5)]))


@pytest.fixture(scope="session")
def gde():
    """Certified reptation damping function with window constants."""
    return sk.doi_edwards_damping()


@pytest.fixture(scope="session")
def cubic():
    """Polynomial damping g(y) = y^3 - y with certified window constants."""
    g = sk.damping_from_callables(
        "cubic",
        lambda y: y**3 - y,
        lambda y: 3.0 * y**2 - 1.0,
        lambda y: 6.0 * y,
        lambda y: np.full_like(y, 6.0),
        domain=np.inf,
    )
    return g.with_constants(sk.estimate_damping_constants(g, max_theta=0.5))


@pytest.fixture()
def rng():
    return np.random.default_rng(20260815)
