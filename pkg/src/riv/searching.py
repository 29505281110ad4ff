"""The searching confidence interval.

For every ``beta`` on a grid, each active instrument's deviation
``Gamma_hat[j] - beta * gamma_hat[j]`` is hard-thresholded at a multiple of its
standard error. ``beta`` passes when fewer than half of the active instruments
keep a non-zero deviation; the interval runs from the smallest to the largest
passing grid point.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from riv import _kernels, mvn
from riv.errors import CovarianceError, SelectionError, ValidationError
from riv.reduced_form import ratio_variance

THRESHOLD_INFLATION = 1.01


@dataclass(frozen=True, eq=False)
class GridSpec:
    L: float
    U: float
    step: float
    points: np.ndarray
    a: float = None

    @property
    def count(self):
        return int(self.points.shape[0])

    def to_dict(self):
        return {"L": self.L, "U": self.U, "a": self.a, "step": self.step, "count": self.count}


@dataclass(frozen=True)
class ThresholdSpec:
    rho: float
    method: str
    alpha: float = None
    K: int = None


@dataclass(frozen=True, eq=False)
class Interval:
    """A possibly empty interval with the information used to build it."""

    lo: float = None
    hi: float = None
    empty: bool = False
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def make_empty(cls, **diagnostics):
        return cls(None, None, True, diagnostics)

    def contains(self, x):
        return (not self.empty) and self.lo <= x <= self.hi

    @property
    def length(self):
        return 0.0 if self.empty else self.hi - self.lo

    def to_dict(self):
        out = {"lo": self.lo, "hi": self.hi, "empty": self.empty}
        out.update(self.diagnostics)
        return out


def grid_from_step(L, U, step):
    """Points ``L, L + step, ...`` strictly below ``U``, then ``U`` itself.

    Each point is computed as ``L + k * step`` so grids whose steps differ by a
    power of two are exactly nested.
    """
    if not (np.isfinite(L) and np.isfinite(U)) or L > U:
        raise ValidationError(f"invalid range [{L}, {U}]")
    if step <= 0:
        raise ValidationError("grid step must be positive")
    if U == L:
        return np.array([float(L)])
    k = max(1, math.ceil(round((U - L) / step, 9)))
    pts = L + np.arange(k) * step
    return np.append(pts, float(U))


def make_grid(L, U, n, a=0.6):
    """Grid on ``[L, U]`` with spacing ``n ** -a``; ``a`` must exceed 1/2."""
    if a <= 0.5:
        raise ValidationError(f"grid exponent a={a} must be greater than 0.5")
    if n < 2:
        raise ValidationError("n must be at least 2")
    step = float(n) ** (-a)
    return GridSpec(float(L), float(U), step, grid_from_step(L, U, step), a)


def _active(V):
    V = tuple(int(v) for v in V)
    if not V:
        raise SelectionError("active instrument set is empty")
    return V


def initial_range(fit, V):
    """Hull of ``ratio_j -/+ (log n)^{1/4} * sd(ratio_j)`` over the active instruments."""
    V = _active(V)
    m = np.log(fit.n) ** 0.25
    ratios = np.array([fit.Gamma_hat[j] / fit.gamma_hat[j] for j in V])
    sds = np.sqrt([ratio_variance(fit, j) for j in V])
    return float(np.min(ratios - m * sds)), float(np.max(ratios + m * sds))


def scale_matrix(fit, V, grid):
    """``sqrt(V_Gamma_jj + b^2 V_gamma_jj - 2 b C_jj)`` for ``j`` in ``V`` (rows) and grid ``b``."""
    V = list(V)
    vG = np.diag(fit.V_Gamma)[V][:, None]
    vg = np.diag(fit.V_gamma)[V][:, None]
    c = np.diag(fit.C)[V][:, None]
    b = np.asarray(grid, dtype=float)[None, :]
    rad = vG + b * b * vg - 2 * b * c
    tol = 1e-12 * np.maximum(1.0, vG + b * b * vg)
    if np.any(rad < -tol):
        raise CovarianceError("negative variance for a thresholded deviation")
    return np.sqrt(np.clip(rad, 0.0, None))


def threshold_matrix(fit, V, grid, rho):
    return THRESHOLD_INFLATION * rho * scale_matrix(fit, V, grid)


def rho_j(fit, j, beta, rho):
    """Per-instrument threshold ``1.01 * rho * sd(Gamma_j - beta gamma_j)``."""
    return float(threshold_matrix(fit, [j], [beta], rho)[0, 0])


def rho_bonferroni(alpha, grid_size, p_z):
    if grid_size < 1 or p_z < 1:
        raise ValidationError("grid_size and p_z must be positive")
    rho = stats.norm.ppf(1 - alpha / (grid_size * p_z))
    return ThresholdSpec(float(rho), "bonferroni", alpha)


def rho_sqrt_log(grid_size, c=2.005):
    return ThresholdSpec(float(np.sqrt(c * np.log(grid_size))), "sqrt_log")


def upper_quantile(values, alpha):
    """Order statistic of rank ``ceil((1 - alpha) K)`` (1-based)."""
    v = np.sort(np.asarray(values))
    K = v.shape[0]
    rank = min(K, max(1, math.ceil(round((1 - alpha) * K, 9))))
    return float(v[rank - 1])


def rho_bootstrap(fit, V, grid, alpha=0.05, K=1000, rng=None, backend=None):
    """Upper ``alpha`` quantile of the simulated max-|t| statistic over ``V`` and the grid.

    Draws ``K`` zero-mean Gaussian vectors with the joint covariance of
    ``(Gamma_hat, gamma_hat)`` restricted to ``V``.
    """
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    if K < 100:
        raise ValidationError("K must be at least 100")
    V = list(_active(V))
    rng = np.random.default_rng(rng)
    pts = grid.points if isinstance(grid, GridSpec) else np.asarray(grid, dtype=float)
    sd = scale_matrix(fit, V, pts)
    if np.any(sd <= 0):
        raise CovarianceError("degenerate covariance: zero standard error on the grid")
    idx = V + [fit.p_z + j for j in V]
    cov = fit.joint_cov[np.ix_(idx, idx)]
    Zs = mvn.draw(np.zeros(2 * len(V)), cov, K, rng)
    T = _kernels.bootstrap_max(Zs[:, :len(V)], Zs[:, len(V):], pts, sd, backend=backend)
    return ThresholdSpec(upper_quantile(T, alpha), "bootstrap", alpha, K)


def sparsity(fit, V, beta, rho, lam=1.0):
    """Number of instruments in ``V`` whose thresholded deviation at ``beta`` is non-zero."""
    V = list(_active(V))
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    dev = fit.Gamma_hat[V] - beta * fit.gamma_hat[V]
    thr = threshold_matrix(fit, V, [beta], rho)[:, 0]
    kept = dev * (np.abs(dev) >= lam * thr)
    return int(np.count_nonzero(kept))


def sparsity_path(fit, V, points, rho, lam=1.0, backend=None):
    V = list(_active(V))
    thr = threshold_matrix(fit, V, points, rho)
    return _kernels.sparsity_counts(fit.Gamma_hat[V], fit.gamma_hat[V], points, thr, lam,
                                    backend=backend)


def _passing(counts, v):
    return 2 * np.asarray(counts) < v


def refine_range(fit, V, L, U, backend=None):
    """Pre-search on a ``1/n`` grid with threshold ``sqrt(2.005 log |B0|)``.

    Returns ``(L_ref, U_ref)``, or ``None`` when no grid point passes.
    """
    if L > U:
        raise ValidationError("L must not exceed U")
    V = list(_active(V))
    pts = grid_from_step(L, U, 1.0 / fit.n)
    rho = rho_sqrt_log(pts.shape[0]).rho
    ok = _passing(sparsity_path(fit, V, pts, rho, backend=backend), len(V))
    if not ok.any():
        return None
    idx = np.flatnonzero(ok)
    return float(pts[idx[0]]), float(pts[idx[-1]])


def searching_ci(fit, V, grid, rho, backend=None, rule="majority"):
    """Smallest and largest passing grid points, or an empty interval.

    Parameters
    ----------
    fit : ReducedFormFit
    V : sequence of int or SelectionResult
        Active instruments: all relevant ones under the majority rule, the
        estimated valid set under the plurality rule.
    grid : GridSpec or array
    rho : float or ThresholdSpec
    rule : str
        Only used to word the diagnostic for an empty interval.
    """
    V = list(_active(getattr(V, "V_hat", V)))
    pts = grid.points if isinstance(grid, GridSpec) else np.asarray(grid, dtype=float)
    r = rho.rho if isinstance(rho, ThresholdSpec) else float(rho)
    counts = sparsity_path(fit, V, pts, r, backend=backend)
    ok = _passing(counts, len(V))
    diag = {
        "method": "searching",
        "rho": r,
        "grid": grid.to_dict() if isinstance(grid, GridSpec) else {"count": int(pts.shape[0])},
        "valid_set": V,
    }
    if isinstance(rho, ThresholdSpec):
        diag["alpha"] = rho.alpha
        diag["rho_method"] = rho.method
    if not ok.any():
        diag["warning"] = f"{rule} rule may be violated"
        return Interval.make_empty(**diag)
    idx = np.flatnonzero(ok)
    lo_i, hi_i = int(idx[0]), int(idx[-1])
    diag["sparsity_at_endpoints"] = [int(counts[lo_i]), int(counts[hi_i])]
    diag["interior_failures"] = int((hi_i - lo_i + 1) - idx.shape[0])
    return Interval(float(pts[lo_i]), float(pts[hi_i]), False, diag)
