"""Reduced-form OLS fit and its covariance estimates.

Both regressions ``Y ~ W`` and ``D ~ W`` with ``W = (Z, X)`` share one design,
so a single factorization of ``W`` (or of ``W'W`` when only summary statistics
are available) serves both.

All covariance blocks are stored at the scale of the estimators themselves,
i.e. ``V_Gamma`` approximates ``Var(Gamma_hat)`` and is ``O(1/n)``.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from riv.data_io import Dataset, SummaryStats
from riv.errors import DimensionError, SingularDesignError, UnsupportedError, ValidationError

_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ReducedFormFit:
    """Everything the downstream procedures need from the first stage.

    Attributes
    ----------
    Gamma_hat, gamma_hat : ndarray (p_z,)
        Instrument coefficients from the outcome and treatment regressions.
    Psi_hat, psi_hat : ndarray (p_x,)
        Covariate coefficients from the same regressions.
    Omega_hat : ndarray (p_z, p_z)
        Top-left block of ``(W'W / n)^{-1}``.
    WtW_inv : ndarray (p, p)
        Full ``(W'W)^{-1}``.
    sigma_eps_sq, sigma_delta_sq, sigma_eps_delta : float
        Residual (co)variances with an ``n - 1`` denominator.
    V_Gamma, V_gamma, C : ndarray (p_z, p_z)
        Estimated ``Var(Gamma_hat)``, ``Var(gamma_hat)`` and ``Cov(Gamma_hat, gamma_hat)``.
    covariance : str
        ``"homoscedastic"`` or ``"robust"``.
    """

    Gamma_hat: np.ndarray
    gamma_hat: np.ndarray
    Psi_hat: np.ndarray
    psi_hat: np.ndarray
    Omega_hat: np.ndarray
    WtW_inv: np.ndarray
    sigma_eps_sq: float
    sigma_delta_sq: float
    sigma_eps_delta: float
    V_Gamma: np.ndarray
    V_gamma: np.ndarray
    C: np.ndarray
    n: int
    p_z: int
    p_x: int
    covariance: str = "homoscedastic"

    @property
    def joint_cov(self):
        """Covariance of the stacked vector ``(Gamma_hat, gamma_hat)``."""
        return np.block([[self.V_Gamma, self.C], [self.C.T, self.V_gamma]])

    def with_covariance(self, V_Gamma, V_gamma, C, label="robust"):
        return replace(self, V_Gamma=np.asarray(V_Gamma, dtype=float),
                       V_gamma=np.asarray(V_gamma, dtype=float),
                       C=np.asarray(C, dtype=float), covariance=label)

    def summary(self):
        return {
            "n": self.n,
            "p_z": self.p_z,
            "p_x": self.p_x,
            "Gamma_hat": self.Gamma_hat.tolist(),
            "gamma_hat": self.gamma_hat.tolist(),
            "sigma_eps_sq": self.sigma_eps_sq,
            "sigma_delta_sq": self.sigma_delta_sq,
            "sigma_eps_delta": self.sigma_eps_delta,
            "covariance": self.covariance,
        }


def _assemble(coef_y, coef_d, WtW_inv, n, p_z, s_ee, s_dd, s_ed):
    Omega = n * WtW_inv[:p_z, :p_z]
    Omega = (Omega + Omega.T) / 2
    return ReducedFormFit(
        Gamma_hat=coef_y[:p_z].copy(),
        gamma_hat=coef_d[:p_z].copy(),
        Psi_hat=coef_y[p_z:].copy(),
        psi_hat=coef_d[p_z:].copy(),
        Omega_hat=Omega,
        WtW_inv=WtW_inv,
        sigma_eps_sq=float(s_ee),
        sigma_delta_sq=float(s_dd),
        sigma_eps_delta=float(s_ed),
        V_Gamma=s_ee * Omega / n,
        V_gamma=s_dd * Omega / n,
        C=s_ed * Omega / n,
        n=int(n),
        p_z=int(p_z),
        p_x=int(WtW_inv.shape[0] - p_z),
    )


def fit_ols(data: Dataset) -> ReducedFormFit:
    """Fit both reduced-form regressions by OLS.

    Raises
    ------
    SingularDesignError
        ``W`` is rank deficient (smallest singular value below ``1e-10`` times the largest).
    """
    W = data.W
    n, p = W.shape
    if n <= p:
        raise DimensionError(f"n={n} must exceed the number of regressors p={p}")
    Q, R = np.linalg.qr(W)
    sv = np.linalg.svd(R, compute_uv=False)
    if sv[-1] <= _RANK_TOL * sv[0]:
        raise SingularDesignError(
            f"design matrix is rank deficient (singular values ratio {sv[-1] / sv[0]:.3g})"
        )
    coef_y = linalg.solve_triangular(R, Q.T @ data.Y)
    coef_d = linalg.solve_triangular(R, Q.T @ data.D)
    R_inv = linalg.solve_triangular(R, np.eye(p))
    WtW_inv = R_inv @ R_inv.T
    u = data.Y - W @ coef_y
    v = data.D - W @ coef_d
    return _assemble(coef_y, coef_d, WtW_inv, n, data.p_z,
                     u @ u / (n - 1), v @ v / (n - 1), u @ v / (n - 1))


def fit_from_summary(s: SummaryStats) -> ReducedFormFit:
    """Same estimator as :func:`fit_ols` computed from ``W'W``, ``W'Y``, ``W'D``."""
    eig = np.linalg.eigvalsh(s.WtW)
    if eig[0] <= _RANK_TOL ** 2 * eig[-1]:
        raise SingularDesignError("W'W is numerically singular")
    try:
        cf = linalg.cho_factor(s.WtW, lower=True)
    except linalg.LinAlgError:
        raise SingularDesignError("W'W is not positive definite") from None
    coef_y = linalg.cho_solve(cf, s.WtY)
    coef_d = linalg.cho_solve(cf, s.WtD)
    WtW_inv = linalg.cho_solve(cf, np.eye(s.p))
    WtW_inv = (WtW_inv + WtW_inv.T) / 2
    return _assemble(coef_y, coef_d, WtW_inv, s.n, s.p_z,
                     s.sigma_eps_sq, s.sigma_delta_sq, s.sigma_eps_delta)


def summarize(data: Dataset) -> SummaryStats:
    """Reduce a dataset to the statistics :func:`fit_from_summary` consumes."""
    W = data.W
    fit = fit_ols(data)
    return SummaryStats(
        WtW=W.T @ W,
        WtY=W.T @ data.Y,
        WtD=W.T @ data.D,
        n=data.n,
        sigma_eps_sq=fit.sigma_eps_sq,
        sigma_delta_sq=fit.sigma_delta_sq,
        sigma_eps_delta=fit.sigma_eps_delta,
        p_z=data.p_z,
    )


def residuals(data: Dataset, fit: ReducedFormFit):
    """Outcome and treatment residuals of the reduced-form fit."""
    u = data.Y - data.Z @ fit.Gamma_hat - data.X @ fit.Psi_hat
    v = data.D - data.Z @ fit.gamma_hat - data.X @ fit.psi_hat
    return u, v


def robust_covariance(data, fit):
    """Heteroscedasticity-robust (sandwich) covariance blocks.

    Returns
    -------
    V_Gamma, V_gamma, C : ndarray (p_z, p_z)
        ``[(W'W)^{-1} (sum_i a_i b_i W_i W_i') (W'W)^{-1}]`` restricted to the
        instrument block, with ``(a, b)`` the outcome/outcome, treatment/treatment
        and outcome/treatment residual pairs respectively.
    """
    if not isinstance(data, Dataset):
        raise UnsupportedError("robust covariance needs raw data, not summary statistics")
    W = data.W
    u, v = residuals(data, fit)
    A = fit.WtW_inv
    pz = fit.p_z

    def sandwich(a, b):
        meat = (W * (a * b)[:, None]).T @ W
        full = A @ meat @ A
        block = full[:pz, :pz]
        return (block + block.T) / 2

    return sandwich(u, u), sandwich(v, v), sandwich(u, v)


def fit_robust(data: Dataset) -> ReducedFormFit:
    fit = fit_ols(data)
    return fit.with_covariance(*robust_covariance(data, fit))


def ratio_variance(fit: ReducedFormFit, j: int) -> float:
    """Delta-method variance of the single-instrument ratio ``Gamma_hat[j] / gamma_hat[j]``.

    With homoscedastic blocks this is
    ``(s_ee + b^2 s_dd - 2 b s_ed) / gamma_j^2 * [(W'W)^{-1}]_jj`` where
    ``b = Gamma_j / gamma_j``. Tiny negative values from rounding are clamped to zero.
    """
    g = fit.gamma_hat[j]
    if g == 0:
        raise ZeroDivisionError(f"gamma_hat[{j}] is zero")
    b = fit.Gamma_hat[j] / g
    num = fit.V_Gamma[j, j] + b * b * fit.V_gamma[j, j] - 2 * b * fit.C[j, j]
    var = num / (g * g)
    scale = (fit.V_Gamma[j, j] + b * b * fit.V_gamma[j, j]) / (g * g)
    if var < -1e-12 - 1e-10 * scale:
        raise ValidationError(f"negative ratio variance {var:.3g} for instrument {j}")
    return max(float(var), 0.0)
