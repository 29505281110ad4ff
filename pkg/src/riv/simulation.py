"""Monte Carlo harness for coverage and length studies.

Each replication ``r`` draws its data and its analysis seed from
``SeedSequence((master_seed, r))``, so any subset of replications can be rerun
or sharded across processes with identical results.
"""

import csv
import io
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from riv.data_io import Dataset
from riv.errors import RIVError, ValidationError
from riv.pipeline import AnalysisConfig, analyze, oracle_tsls, post_selection_tsls
from riv.searching import Interval

SETTINGS = ("S1", "S2", "S3", "S4", "S5", "CIIV1", "CIIV2")
METHODS = ("oracle", "tsls", "searching", "sampling")
ERR_CORR = 0.8


@dataclass(frozen=True, eq=False)
class SimSetting:
    name: str
    gamma0: float
    tau: float
    n: int
    gamma_star: np.ndarray
    pi_star: np.ndarray
    psi_star: np.ndarray
    Psi_star: np.ndarray
    beta_star: float = 1.0
    err_corr: float = ERR_CORR
    err_scale: float = 1.0

    def __post_init__(self):
        for name in ("gamma_star", "pi_star", "psi_star", "Psi_star"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if self.gamma_star.shape != self.pi_star.shape:
            raise ValidationError("gamma_star and pi_star must have the same length")
        if self.psi_star.shape != self.Psi_star.shape:
            raise ValidationError("psi_star and Psi_star must have the same length")
        if self.n < self.p_z + self.p_x + 2:
            raise ValidationError(f"n={self.n} too small for this setting")
        if not -1 < self.err_corr < 1:
            raise ValidationError("err_corr must lie in (-1, 1)")

    @property
    def p_z(self):
        return self.gamma_star.shape[0]

    @property
    def p_x(self):
        return self.psi_star.shape[0]

    @property
    def Sigma(self):
        p = self.p_z + self.p_x
        idx = np.arange(p)
        return 0.5 ** np.abs(idx[:, None] - idx[None, :])

    @property
    def valid_set(self):
        """Indices of instruments with no direct effect."""
        return tuple(int(j) for j in np.flatnonzero(self.pi_star == 0))

    def label(self):
        return {"setting": self.name, "gamma0": self.gamma0, "tau": self.tau, "n": self.n}


def _pi_vector(name, gamma0, tau):
    t = tau * gamma0
    if name == "S1":
        return [0] * 6 + [t, t, -0.5, -1]
    if name == "S2":
        return [0] * 4 + [t, t, -1 / 3, -2 / 3, -1, -4 / 3]
    if name == "S3":
        return [0] * 4 + [t, t, -1 / 6, -1 / 3, -1 / 2, -2 / 3]
    if name == "S4":
        return [0, 0, -0.8, -0.4, t, 0.6]
    if name == "S5":
        return [0, 0, -0.8, -0.4, t, t + 0.1]
    if name == "CIIV1":
        return [0] * 9 + [tau] * 6 + [tau / 2] * 6
    if name == "CIIV2":
        return [0] * 9 + [tau] * 3 + [-tau] * 3 + [tau / 2] * 3 + [-tau / 2] * 3
    raise ValidationError(f"unknown setting {name!r}; choose from {SETTINGS}")


def build_setting(name, gamma0=0.5, tau=0.2, n=2000, p_x=None, beta_star=1.0):
    """Parameter vectors for a named design.

    The S-designs use ``p_x = 10`` covariates; the CIIV designs default to none
    and fix the instrument strength at 0.4 (``gamma0`` is ignored there).
    """
    pi = np.array(_pi_vector(name, gamma0, tau), dtype=float)
    p_z = pi.shape[0]
    if name.startswith("CIIV"):
        gamma = np.full(p_z, 0.4)
        p_x = 0 if p_x is None else p_x
    else:
        gamma = np.full(p_z, float(gamma0))
        p_x = 10 if p_x is None else p_x
    psi = 0.6 + 0.1 * np.arange(p_x)
    Psi = 1.1 + 0.1 * np.arange(p_x)
    return SimSetting(name, float(gamma0), float(tau), int(n), gamma, pi, psi, Psi,
                      beta_star=float(beta_star))


def custom_setting(gamma_star, pi_star, n, beta_star=1.0, p_x=0, name="custom"):
    gamma_star = np.asarray(gamma_star, dtype=float)
    return SimSetting(name, float("nan"), float("nan"), int(n), gamma_star, pi_star,
                      0.6 + 0.1 * np.arange(p_x), 1.1 + 0.1 * np.arange(p_x),
                      beta_star=float(beta_star))


def generate(setting: SimSetting, seed=None) -> Dataset:
    """One dataset from the linear outcome and treatment models."""
    rng = np.random.default_rng(seed)
    n, p_z = setting.n, setting.p_z
    L = np.linalg.cholesky(setting.Sigma)
    W = rng.standard_normal((n, L.shape[0])) @ L.T
    r = setting.err_corr
    err_L = np.array([[1.0, 0.0], [r, np.sqrt(1 - r * r)]])
    eps, delta = (setting.err_scale * rng.standard_normal((n, 2)) @ err_L.T).T
    Z, X = W[:, :p_z], W[:, p_z:]
    D = Z @ setting.gamma_star + X @ setting.psi_star + delta
    Y = D * setting.beta_star + Z @ setting.pi_star + X @ setting.Psi_star + eps
    return Dataset(Y, D, Z, X)


# replications ----------------------------------------------------------------


def replication_seeds(master_seed, r):
    """``(data_seed, analysis_seed)`` for replication ``r``."""
    data_ss, ana_ss = np.random.SeedSequence((int(master_seed), int(r))).spawn(2)
    return data_ss, int(ana_ss.generate_state(1, np.uint64)[0])


@dataclass
class MethodStats:
    covered: list = field(default_factory=list)
    lengths: list = field(default_factory=list)
    errors: int = 0
    seconds: float = 0.0

    @property
    def R(self):
        return len(self.covered)

    @property
    def coverage(self):
        return float(np.mean(self.covered)) if self.covered else float("nan")

    @property
    def avg_length(self):
        kept = [x for x in self.lengths if x is not None]
        return float(np.mean(kept)) if kept else float("nan")

    @property
    def empty_count(self):
        return sum(x is None for x in self.lengths)

    def to_dict(self):
        return {"coverage": self.coverage, "avg_length": self.avg_length,
                "empty_count": self.empty_count, "errors": self.errors,
                "seconds": self.seconds}


@dataclass
class SimReport:
    setting: SimSetting
    R: int
    methods: dict
    runtime: float = 0.0

    def to_dict(self):
        out = dict(self.setting.label())
        out["R"] = self.R
        out["methods"] = {m: s.to_dict() for m, s in self.methods.items()}
        return out


def _as_interval(out):
    if out is None:
        return None
    if isinstance(out, Interval):
        return None if out.empty else (out.lo, out.hi)
    lo, hi = out
    return float(lo), float(hi)


def run_one(setting, methods, r, master_seed, config):
    """Intervals for every method on replication ``r``.

    Returns ``{method: (interval_or_None, error_flag, seconds)}``.
    """
    data_ss, ana_seed = replication_seeds(master_seed, r)
    data = generate(setting, data_ss)
    cfg = replace(config, seed=ana_seed)
    cache = {}
    out = {}

    def analysis():
        if "analysis" not in cache:
            try:
                cache["analysis"] = analyze(data, cfg)
            except RIVError as exc:
                cache["analysis"] = exc
        return cache["analysis"]

    for name in methods:
        t0 = time.perf_counter()
        err = False
        try:
            if callable(name):
                iv = _as_interval(name(data, setting, cfg))
            elif name == "oracle":
                iv = _as_interval(oracle_tsls(data, setting.valid_set, cfg.alpha).interval)
            elif name == "tsls":
                res = analysis()
                if isinstance(res, Exception):
                    raise res
                iv = _as_interval(post_selection_tsls(data, res.fit, res.selection, cfg.alpha).interval)
            elif name in ("searching", "sampling"):
                res = analysis()
                if isinstance(res, Exception):
                    raise res
                iv = _as_interval(res.searching if name == "searching" else res.sampling.ci)
            else:
                raise ValidationError(f"unknown method {name!r}; choose from {METHODS}")
        except RIVError as exc:
            if isinstance(exc, ValidationError) and "unknown method" in str(exc):
                raise
            iv, err = None, True
        out[_method_name(name)] = (iv, err, time.perf_counter() - t0)
    return out


def _method_name(m):
    return getattr(m, "__name__", str(m)) if callable(m) else m


def _run_chunk(args):
    setting, methods, reps, master_seed, config = args
    return [run_one(setting, methods, r, master_seed, config) for r in reps]


def run_replications(setting, methods=METHODS, R=500, master_seed=0, config=None, workers=1,
                     first=1):
    """Replications ``first .. first + R - 1`` of every method on ``setting``.

    Parameters
    ----------
    methods : sequence
        Method names from ``METHODS`` or callables ``f(data, setting, config)``
        returning ``(lo, hi)``, an ``Interval`` or ``None`` for an empty set.
    workers : int
        Process count. Results do not depend on it.

    A method that raises a package error on a replication counts as an empty
    interval there and is tallied under ``errors``.
    """
    if R < 1:
        raise ValidationError("R must be at least 1")
    config = config or AnalysisConfig()
    methods = tuple(methods)
    reps = list(range(first, first + R))
    t0 = time.perf_counter()
    if workers > 1:
        chunks = [reps[i::workers] for i in range(workers)]
        # spawn: forking after numba has started its OpenMP pool is unsafe
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(workers, mp_context=ctx) as pool:
            parts = list(pool.map(_run_chunk, [(setting, methods, c, master_seed, config)
                                               for c in chunks]))
        by_rep = {}
        for c, res in zip(chunks, parts):
            by_rep.update(zip(c, res))
        results = [by_rep[r] for r in reps]
    else:
        results = _run_chunk((setting, methods, reps, master_seed, config))

    stats = {_method_name(m): MethodStats() for m in methods}
    for res in results:
        for name, (iv, err, secs) in res.items():
            st = stats[name]
            st.covered.append(iv is not None and iv[0] <= setting.beta_star <= iv[1])
            st.lengths.append(None if iv is None else iv[1] - iv[0])
            st.errors += int(err)
            st.seconds += secs
    return SimReport(setting, R, stats, time.perf_counter() - t0)


# tables ------------------------------------------------------------------------


def _sort_key(rep):
    s = rep.setting
    return (s.name, s.tau, s.n, s.gamma0)


def table_rows(reports):
    if not reports:
        raise ValidationError("no reports to tabulate")
    reports = sorted(reports, key=_sort_key)
    methods = []
    for rep in reports:
        methods += [m for m in rep.methods if m not in methods]
    header = ["setting", "gamma0", "tau", "n", "R"]
    for m in methods:
        header += [f"{m}_coverage", f"{m}_length", f"{m}_empty"]
    rows = []
    for rep in reports:
        s = rep.setting
        row = [s.name, s.gamma0, s.tau, s.n, rep.R]
        for m in methods:
            st = rep.methods.get(m)
            row += [float("nan"), float("nan"), 0] if st is None else \
                [st.coverage, st.avg_length, st.empty_count]
        rows.append(row)
    return header, rows


def emit_table(reports, fmt="csv"):
    """Table text with one row per ``(setting, tau, n)`` and per-method coverage and length."""
    header, rows = table_rows(reports)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()
    if fmt == "text":
        cells = [header] + [[f"{v:.3f}" if isinstance(v, float) else str(v) for v in row]
                            for row in rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
        return "".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) + "\n" for r in cells)
    raise ValidationError(f"unknown table format {fmt!r}")


def parse_table(text):
    """Read a CSV table written by :func:`emit_table` back into dictionaries."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        rec = {}
        for k, v in row.items():
            if k == "setting":
                rec[k] = v
            elif k in ("n", "R") or k.endswith("_empty"):
                rec[k] = int(v)
            else:
                rec[k] = float(v)
        out.append(rec)
    return out
