import pytest

from halfwave import inhomogeneity as inh
from halfwave.acceptance import Context


@pytest.fixture(scope="session")
def ctx():
    return Context()


@pytest.fixture(scope="session")
def gs(ctx):
    return ctx.gs


@pytest.fixture(scope="session")
def pair(ctx):
    return ctx.pair


@pytest.fixture(scope="session")
def coeffs(ctx):
    return ctx.coeffs


@pytest.fixture(scope="session")
def basis(ctx):
    return ctx.basis


@pytest.fixture(scope="session")
def k_default():
    return inh.default()


@pytest.fixture(scope="session")
def coeffs_homogeneous(ctx):
    return ctx.coeffs_homogeneous


@pytest.fixture(scope="session")
def basis_homogeneous(ctx):
    return ctx.basis_homogeneous
