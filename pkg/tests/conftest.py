import numpy as np
import pytest

from riv.data_io import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(rng, n=400, p_z=4, p_x=2, beta=1.0, gamma=None, pi=None, corr=0.5):
    """Small linear IV design used across the unit tests."""
    gamma = np.full(p_z, 0.8) if gamma is None else np.asarray(gamma, float)
    pi = np.zeros(p_z) if pi is None else np.asarray(pi, float)
    Z = rng.standard_normal((n, p_z))
    X = rng.standard_normal((n, p_x))
    e = rng.standard_normal(n)
    d = corr * e + np.sqrt(1 - corr ** 2) * rng.standard_normal(n)
    D = Z @ gamma + X @ np.full(p_x, 0.3) + d
    Y = beta * D + Z @ pi + X @ np.full(p_x, -0.2) + e
    return Dataset(Y, D, Z, X)


@pytest.fixture
def dataset(rng):
    return make_dataset(rng)


def fit_from_blocks(Gamma, gamma, n=100, s_ee=1.0, s_dd=1.0, s_ed=0.0, Omega=None, p_x=0):
    """Reduced-form fit assembled directly from chosen estimates and ``Omega_hat``."""
    from riv.reduced_form import _assemble

    Gamma = np.asarray(Gamma, float)
    gamma = np.asarray(gamma, float)
    p_z = Gamma.shape[0]
    Omega = np.eye(p_z) if Omega is None else np.asarray(Omega, float)
    WtW_inv = np.zeros((p_z + p_x, p_z + p_x))
    WtW_inv[:p_z, :p_z] = Omega / n
    if p_x:
        WtW_inv[p_z:, p_z:] = np.eye(p_x) / n
    coef_y = np.concatenate([Gamma, np.zeros(p_x)])
    coef_d = np.concatenate([gamma, np.zeros(p_x)])
    return _assemble(coef_y, coef_d, WtW_inv, n, p_z, s_ee, s_dd, s_ed)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
