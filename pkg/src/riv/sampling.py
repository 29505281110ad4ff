"""The sampling confidence interval.

The reduced-form estimates are redrawn ``M`` times from their estimated
Gaussian law. Each draw is scanned like the searching interval but with the
thresholds shrunk by a factor ``lambda``; the sampling interval is the hull of
the non-empty per-draw intervals.
"""

from dataclasses import dataclass, field

import numpy as np

from riv import _kernels, mvn
from riv.errors import TuningError, ValidationError
from riv.searching import GridSpec, Interval, ThresholdSpec, threshold_matrix


@dataclass(frozen=True)
class SamplingConfig:
    M: int = 1000
    lam: object = "auto"
    lambda_init_scale: float = 1 / 6
    lambda_growth: float = 1.25
    min_nonempty_frac: float = 0.05
    max_tune_steps: int = 30

    def __post_init__(self):
        if self.M < 1:
            raise ValidationError("M must be at least 1")
        if self.lam != "auto" and not float(self.lam) > 0:
            raise ValidationError("lambda must be positive or 'auto'")
        if not 0 < self.min_nonempty_frac < 1:
            raise ValidationError("min_nonempty_frac must lie in (0, 1)")
        if self.lambda_growth <= 1:
            raise ValidationError("lambda_growth must exceed 1")


@dataclass(frozen=True, eq=False)
class SamplingReport:
    lambda_used: float
    intervals: list
    ci: Interval
    M: int
    tuning_trace: list = field(default_factory=list)

    @property
    def nonempty_indices(self):
        return [m for m, iv in enumerate(self.intervals) if iv is not None]

    @property
    def nonempty_count(self):
        return len(self.nonempty_indices)

    def to_dict(self, include_samples=False):
        out = {
            "lambda": self.lambda_used,
            "M": self.M,
            "nonempty_count": self.nonempty_count,
            "ci": {"lo": self.ci.lo, "hi": self.ci.hi, "empty": self.ci.empty},
            "tuning": [{"lambda": lam, "nonempty_frac": f} for lam, f in self.tuning_trace],
        }
        if "warning" in self.ci.diagnostics:
            out["warning"] = self.ci.diagnostics["warning"]
        if include_samples:
            out["per_sample"] = [None if iv is None else list(iv) for iv in self.intervals]
        return out


def mvn_sample(fit, M, rng=None):
    """``M`` draws of ``(Gamma, gamma)`` around the fitted values.

    Returns two ``(M, p_z)`` arrays.
    """
    rng = np.random.default_rng(rng)
    mean = np.concatenate([fit.Gamma_hat, fit.gamma_hat])
    X = mvn.draw(mean, fit.joint_cov, M, rng)
    return X[:, :fit.p_z], X[:, fit.p_z:]


def _points(grid):
    return grid.points if isinstance(grid, GridSpec) else np.asarray(grid, dtype=float)


def _rho(rho):
    return rho.rho if isinstance(rho, ThresholdSpec) else float(rho)


def scan_draws(fit, V, grid, rho, lam, G, g, backend=None):
    """Per-draw passing intervals as grid-index pairs (``-1`` marks an empty draw).

    Thresholds come from the original fit, not from the draws.
    """
    V = list(V)
    pts = _points(grid)
    thr = threshold_matrix(fit, V, pts, _rho(rho))
    G = np.atleast_2d(G)[:, V]
    g = np.atleast_2d(g)[:, V]
    return _kernels.scan_intervals(G, g, pts, thr, lam, backend=backend)


def sampled_interval(fit, V, grid, rho, lam, sample, backend=None):
    """Interval for one draw ``sample = (Gamma_m, gamma_m)``; ``None`` if no grid point passes."""
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    Gm, gm = sample
    lo, hi = scan_draws(fit, V, grid, rho, lam, np.asarray(Gm)[None, :], np.asarray(gm)[None, :],
                        backend)
    if lo[0] < 0:
        return None
    pts = _points(grid)
    return float(pts[lo[0]]), float(pts[hi[0]])


def initial_lambda(n, M, p_z, scale=1 / 6):
    return scale * (np.log(n) / M) ** (1.0 / (2 * p_z))


def tune_lambda(fit, V, grid, rho, config, draws, backend=None):
    """Smallest ``lambda_0 * growth^t`` for which more than the target fraction of draws is non-empty.

    Returns
    -------
    lam : float
    trace : list of (lambda, fraction) pairs, one per step tried.
    """
    G, g = draws
    M = G.shape[0]
    lam = initial_lambda(fit.n, M, fit.p_z, config.lambda_init_scale)
    trace = []
    for _ in range(config.max_tune_steps):
        lo, _hi = scan_draws(fit, V, grid, rho, lam, G, g, backend)
        frac = float(np.count_nonzero(lo >= 0)) / M
        trace.append((float(lam), frac))
        if frac > config.min_nonempty_frac:
            return float(lam), trace
        lam *= config.lambda_growth
    raise TuningError(
        f"no lambda up to {trace[-1][0]:.4g} gives more than "
        f"{config.min_nonempty_frac:.0%} non-empty sampled intervals",
        trace,
    )


def hull(intervals):
    """Interval spanning every non-empty entry of ``intervals``."""
    kept = [iv for iv in intervals if iv is not None]
    if not kept:
        return None
    return min(lo for lo, _ in kept), max(hi for _, hi in kept)


def sampling_ci(fit, V, grid, rho, config=None, rng=None, draws=None, backend=None,
                rule="majority"):
    """Sampling interval over the active instruments ``V``.

    Parameters
    ----------
    draws : tuple of arrays, optional
        Pre-computed ``(Gamma, gamma)`` draws; otherwise ``config.M`` are drawn from ``rng``.
    """
    config = config or SamplingConfig()
    V = list(getattr(V, "V_hat", V))
    if draws is None:
        draws = mvn_sample(fit, config.M, rng)
    G, g = draws
    trace = []
    if config.lam == "auto":
        lam, trace = tune_lambda(fit, V, grid, rho, config, draws, backend)
    else:
        lam = float(config.lam)
    lo, hi = scan_draws(fit, V, grid, rho, lam, G, g, backend)
    pts = _points(grid)
    intervals = [None if a < 0 else (float(pts[a]), float(pts[b])) for a, b in zip(lo, hi)]
    diag = {"method": "sampling", "rho": _rho(rho), "lambda": lam, "valid_set": V}
    h = hull(intervals)
    if h is None:
        ci = Interval.make_empty(warning=f"{rule} rule may be violated", **diag)
    else:
        ci = Interval(h[0], h[1], False, diag)
    return SamplingReport(lam, intervals, ci, G.shape[0], trace)
