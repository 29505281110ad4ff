"""End-to-end analysis and the two-stage least squares baselines."""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from riv import searching
from riv.data_io import Dataset, SummaryStats
from riv.errors import RIVError, SelectionError, TuningError, UnsupportedError, ValidationError
from riv.reduced_form import fit_from_summary, fit_ols, robust_covariance
from riv.sampling import SamplingConfig, SamplingReport, mvn_sample, sampling_ci
from riv.searching import Interval
from riv.selection import external_valid_set, majority_selection, select_relevant, tsht_selection

MODES = ("majority", "plurality")
RHO_METHODS = ("bootstrap", "bonferroni", "sqrt_log")


@dataclass(frozen=True)
class AnalysisConfig:
    alpha: float = 0.05
    mode: str = "plurality"
    M: int = 1000
    K: int = 1000
    rho_method: str = "bootstrap"
    a: float = 0.6
    seed: int = 0
    valid_set: tuple = None
    robust: bool = False
    lam: object = "auto"
    refine: bool = True
    backend: str = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.rho_method not in RHO_METHODS:
            raise ValidationError(f"rho_method must be one of {RHO_METHODS}")
        if self.valid_set is not None:
            if self.mode != "plurality":
                raise ValidationError("a user valid set is only used in plurality mode")
            object.__setattr__(self, "valid_set", tuple(int(v) for v in self.valid_set))

    def sampling_config(self):
        return SamplingConfig(M=self.M, lam=self.lam)


@dataclass(frozen=True, eq=False)
class AnalysisResult:
    searching: Interval
    sampling: SamplingReport
    selection: object
    fit: object
    config: AnalysisConfig
    grid: searching.GridSpec
    threshold: searching.ThresholdSpec
    initial_range: tuple
    refined_range: tuple = None
    warnings: list = field(default_factory=list)

    @property
    def mode(self):
        return self.config.mode

    def to_dict(self, include_matrix=True, include_samples=False):
        return {
            "mode": self.config.mode,
            "alpha": self.config.alpha,
            "seed": self.config.seed,
            "searching": self.searching.to_dict(),
            "sampling": self.sampling.to_dict(include_samples=include_samples),
            "selection": self.selection.to_dict(include_matrix=include_matrix),
            "range": {"initial": list(self.initial_range),
                      "refined": None if self.refined_range is None else list(self.refined_range)},
            "fit": self.fit.summary(),
            "config": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in asdict(self.config).items()},
            "warnings": list(self.warnings),
        }


def fit_input(data, robust=False):
    if isinstance(data, SummaryStats):
        if robust:
            raise UnsupportedError("robust covariance needs raw data, not summary statistics")
        return fit_from_summary(data)
    fit = fit_ols(data)
    if robust:
        fit = fit.with_covariance(*robust_covariance(data, fit))
    return fit


def select(fit, config):
    S = select_relevant(fit)
    if config.mode == "majority":
        return majority_selection(S)
    if config.valid_set is not None:
        return external_valid_set(S, config.valid_set)
    return tsht_selection(fit, S)


def choose_threshold(fit, V, grid, config, rng):
    if config.rho_method == "bootstrap":
        return searching.rho_bootstrap(fit, V, grid, config.alpha, config.K, rng,
                                       backend=config.backend)
    if config.rho_method == "bonferroni":
        return searching.rho_bonferroni(config.alpha, grid.count, fit.p_z)
    spec = searching.rho_sqrt_log(max(grid.count, 2))
    return searching.ThresholdSpec(spec.rho, spec.method, config.alpha)


def analyze(data, config=None, fit=None):
    """Searching and sampling intervals for the treatment effect.

    Steps: reduced-form fit, relevance screening, valid-set estimate (plurality
    mode only), initial and refined ranges, grid with spacing ``n^-a``,
    threshold calibration, searching interval, lambda tuning, sampling interval.

    Parameters
    ----------
    data : Dataset or SummaryStats
    config : AnalysisConfig
    fit : ReducedFormFit, optional
        Skip the first stage and use this fit.
    """
    config = config or AnalysisConfig()
    if fit is None:
        fit = fit_input(data, config.robust)
    selection = select(fit, config)
    V = list(selection.V_hat)

    L, U = searching.initial_range(fit, V)
    refined = searching.refine_range(fit, V, L, U, backend=config.backend) if config.refine else None
    lo, hi = refined if refined is not None else (L, U)
    grid = searching.make_grid(lo, hi, fit.n, config.a)

    boot_ss, samp_ss = np.random.SeedSequence(config.seed).spawn(2)
    threshold = choose_threshold(fit, V, grid, config, np.random.default_rng(boot_ss))
    rule = config.mode
    search = searching.searching_ci(fit, V, grid, threshold, backend=config.backend, rule=rule)

    scfg = config.sampling_config()
    draws = mvn_sample(fit, scfg.M, np.random.default_rng(samp_ss))
    try:
        sample = sampling_ci(fit, V, grid, threshold, scfg, draws=draws,
                             backend=config.backend, rule=rule)
    except TuningError as exc:
        last = exc.fractions[-1][0] if exc.fractions else float("nan")
        ci = Interval.make_empty(method="sampling", rho=threshold.rho, valid_set=V,
                                 warning=f"{rule} rule may be violated",
                                 tuning_failed=str(exc))
        sample = SamplingReport(last, [None] * scfg.M, ci, scfg.M, exc.fractions)

    warnings = []
    if search.empty:
        warnings.append(f"searching CI is empty: {rule} rule may be violated")
    if sample.ci.empty:
        warnings.append(f"sampling CI is empty: {rule} rule may be violated")
    return AnalysisResult(search, sample, selection, fit, config, grid, threshold,
                          (L, U), refined, warnings)


def interval_union(a, b) -> Interval:
    """Smallest interval covering both inputs (empty only when both are).

    Inputs are intervals or analysis results; for a result its searching
    interval is used.
    """
    a, b = (getattr(x, "searching", x) for x in (a, b))
    parts = [iv for iv in (a, b) if not iv.empty]
    if not parts:
        return Interval.make_empty(method="union")
    return Interval(min(iv.lo for iv in parts), max(iv.hi for iv in parts), False,
                    {"method": "union"})


# two-stage least squares ------------------------------------------------------


@dataclass(frozen=True)
class TSLSResult:
    beta_hat: float
    se: float
    lo: float
    hi: float
    instruments: tuple

    @property
    def interval(self):
        return Interval(self.lo, self.hi, False, {"method": "tsls"})


def _proj_resid(A, v):
    if A.shape[1] == 0:
        return v
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    return v - A @ coef


def tsls(Y, D, instruments, controls, alpha=0.05):
    """Just- or over-identified TSLS for a scalar treatment with exogenous controls.

    The variance is homoscedastic: second-stage residual variance (``n``
    denominator) over the partialled first-stage fitted sum of squares.
    """
    n = Y.shape[0]
    Zc = _proj_resid(controls, instruments)
    Dc = _proj_resid(controls, D)
    Yc = _proj_resid(controls, Y)
    coef, *_ = np.linalg.lstsq(Zc, Dc, rcond=None)
    Dhat = Zc @ coef
    denom = Dhat @ Dc
    if denom == 0:
        raise ValidationError("instruments have no first-stage strength")
    beta = float(Dhat @ Yc / denom)
    resid = Yc - beta * Dc
    sigma2 = resid @ resid / n
    se = float(np.sqrt(sigma2 / (Dhat @ Dhat)))
    z = stats.norm.ppf(1 - alpha / 2)
    return beta, se, beta - z * se, beta + z * se


def oracle_tsls(data: Dataset, valid_set, alpha=0.05):
    """TSLS using ``valid_set`` as excluded instruments; other instruments and ``X`` are controls."""
    if not isinstance(data, Dataset):
        raise UnsupportedError("TSLS needs raw data")
    V = sorted({int(v) for v in valid_set})
    if not V:
        raise SelectionError("TSLS needs at least one excluded instrument")
    if V[0] < 0 or V[-1] >= data.p_z:
        raise SelectionError(f"instrument indices {V} out of range for p_z={data.p_z}")
    others = [j for j in range(data.p_z) if j not in V]
    controls = np.hstack([data.Z[:, others], data.X])
    beta, se, lo, hi = tsls(data.Y, data.D, data.Z[:, V], controls, alpha)
    return TSLSResult(beta, se, lo, hi, tuple(V))


def post_selection_tsls(data: Dataset, fit, selection, alpha=0.05):
    """TSLS with the estimated valid set treated as if it were known.

    ``fit`` is accepted for symmetry with :func:`analyze`; the controls are the
    same as for :func:`oracle_tsls` with ``V_hat`` in place of the true set.
    """
    if not selection.V_hat:
        raise SelectionError("estimated valid set is empty")
    if fit is not None and fit.p_z != data.p_z:
        raise SelectionError("fit and data disagree on the number of instruments")
    return oracle_tsls(data, selection.V_hat, alpha)


__all__ = [
    "AnalysisConfig",
    "AnalysisResult",
    "RIVError",
    "TSLSResult",
    "analyze",
    "interval_union",
    "oracle_tsls",
    "post_selection_tsls",
    "tsls",
]
