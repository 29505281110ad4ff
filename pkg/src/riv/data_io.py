"""Reading observational data and summary statistics.

Raw data come from a headed CSV file whose columns are assigned roles by an
explicit schema. Summary statistics come from a JSON document holding the Gram
products ``W'W``, ``W'Y``, ``W'D`` and the three noise estimates.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from riv.errors import (
    DimensionError,
    MatrixError,
    ParseError,
    SchemaError,
    SingularDesignError,
    ValidationError,
)

SUMMARY_FIELDS = ("n", "WtW", "WtY", "WtD", "sigma_eps_sq", "sigma_delta_sq", "sigma_eps_delta")


@dataclass(frozen=True)
class Schema:
    """Assignment of CSV columns to roles."""

    outcome: str
    treatment: str
    instruments: tuple
    covariates: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "instruments", tuple(self.instruments))
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if len(self.instruments) == 0:
            raise SchemaError("schema must name at least one instrument column")
        names = [self.outcome, self.treatment, *self.instruments, *self.covariates]
        dupes = sorted({c for c in names if names.count(c) > 1})
        if dupes:
            raise SchemaError(f"columns assigned to more than one role: {dupes}")

    @property
    def columns(self):
        return [self.outcome, self.treatment, *self.instruments, *self.covariates]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcome ``Y``, treatment ``D``, candidate instruments ``Z`` and covariates ``X``.

    ``X`` always has two dimensions; with no covariates it has shape ``(n, 0)``.
    """

    Y: np.ndarray
    D: np.ndarray
    Z: np.ndarray
    X: np.ndarray = None
    instrument_names: tuple = field(default=None)
    covariate_names: tuple = field(default=None)

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float).reshape(-1)
        D = np.asarray(self.D, dtype=float).reshape(-1)
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        n = Y.shape[0]
        X = np.empty((n, 0)) if self.X is None else np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if not (D.shape[0] == Z.shape[0] == X.shape[0] == n):
            raise DimensionError(
                f"row counts differ: Y {n}, D {D.shape[0]}, Z {Z.shape[0]}, X {X.shape[0]}"
            )
        if Z.shape[1] < 1:
            raise DimensionError("at least one instrument is required")
        if n < Z.shape[1] + X.shape[1] + 2:
            raise DimensionError(
                f"n={n} is too small for p_z={Z.shape[1]} and p_x={X.shape[1]};"
                f" need n >= p_z + p_x + 2"
            )
        for name, arr in (("Y", Y), ("D", D), ("Z", Z), ("X", X)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite entries")
        zn = self.instrument_names or tuple(f"z{j + 1}" for j in range(Z.shape[1]))
        xn = self.covariate_names or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        for attr, value in (("Y", Y), ("D", D), ("Z", Z), ("X", X),
                            ("instrument_names", tuple(zn)), ("covariate_names", tuple(xn))):
            object.__setattr__(self, attr, value)

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def p_z(self):
        return self.Z.shape[1]

    @property
    def p_x(self):
        return self.X.shape[1]

    @property
    def W(self):
        return np.hstack([self.Z, self.X])

    def standardized(self):
        """Return a copy with every column of ``Z`` and ``X`` centred and scaled to unit variance."""

        def _scale(A):
            if A.shape[1] == 0:
                return A
            sd = A.std(axis=0)
            if np.any(sd == 0):
                raise ValidationError("cannot standardize a constant column")
            return (A - A.mean(axis=0)) / sd

        return Dataset(self.Y, self.D, _scale(self.Z), _scale(self.X),
                       self.instrument_names, self.covariate_names)


@dataclass(frozen=True, eq=False)
class SummaryStats:
    """Sufficient statistics for the reduced-form fit.

    The first ``p_z`` columns of ``W`` are the candidate instruments, the rest
    are covariates.
    """

    WtW: np.ndarray
    WtY: np.ndarray
    WtD: np.ndarray
    n: int
    sigma_eps_sq: float
    sigma_delta_sq: float
    sigma_eps_delta: float
    p_z: int = None

    def __post_init__(self):
        WtW = np.asarray(self.WtW, dtype=float)
        WtY = np.asarray(self.WtY, dtype=float).reshape(-1)
        WtD = np.asarray(self.WtD, dtype=float).reshape(-1)
        if WtW.ndim != 2 or WtW.shape[0] != WtW.shape[1]:
            raise MatrixError(f"WtW must be square, got shape {WtW.shape}")
        p = WtW.shape[0]
        if WtY.shape[0] != p or WtD.shape[0] != p:
            raise DimensionError(f"WtY and WtD must have length {p}")
        for name, arr in (("WtW", WtW), ("WtY", WtY), ("WtD", WtD)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite entries")
        scale = max(1.0, float(np.max(np.abs(WtW))))
        if np.max(np.abs(WtW - WtW.T)) > 1e-10 * scale:
            raise MatrixError("WtW is not symmetric")
        eig = np.linalg.eigvalsh(WtW)
        if eig[0] <= 0:
            if abs(eig[0]) <= 1e-10 * max(eig[-1], 1.0):
                raise SingularDesignError(f"WtW is singular (smallest eigenvalue {eig[0]:.3g})")
            raise MatrixError(f"WtW is not positive definite (smallest eigenvalue {eig[0]:.3g})")
        p_z = p if self.p_z is None else int(self.p_z)
        if not 1 <= p_z <= p:
            raise DimensionError(f"p_z={p_z} must lie in [1, {p}]")
        n = int(self.n)
        if n != self.n or n < p + 2:
            raise DimensionError(f"n={self.n} must be an integer >= p + 2 = {p + 2}")
        s_ee, s_dd, s_ed = (float(self.sigma_eps_sq), float(self.sigma_delta_sq),
                            float(self.sigma_eps_delta))
        if not (s_ee > 0 and s_dd > 0):
            raise ValidationError("noise variances must be positive")
        if s_ed ** 2 > s_ee * s_dd * (1 + 1e-12):
            raise ValidationError(
                "sigma_eps_delta^2 exceeds sigma_eps_sq * sigma_delta_sq (Cauchy-Schwarz)"
            )
        for attr, value in (("WtW", WtW), ("WtY", WtY), ("WtD", WtD), ("n", n), ("p_z", p_z),
                            ("sigma_eps_sq", s_ee), ("sigma_delta_sq", s_dd),
                            ("sigma_eps_delta", s_ed)):
            object.__setattr__(self, attr, value)

    @property
    def p(self):
        return self.WtW.shape[0]

    @property
    def p_x(self):
        return self.p - self.p_z

    def to_dict(self):
        return {
            "n": self.n,
            "p_z": self.p_z,
            "WtW": self.WtW.tolist(),
            "WtY": self.WtY.tolist(),
            "WtD": self.WtD.tolist(),
            "sigma_eps_sq": self.sigma_eps_sq,
            "sigma_delta_sq": self.sigma_delta_sq,
            "sigma_eps_delta": self.sigma_eps_delta,
        }


def _parse_cell(text, row, column):
    if text.strip() == "":
        raise ParseError(f"missing value at row {row}, column {column!r}", row, column)
    try:
        value = float(text)
    except ValueError:
        raise ParseError(
            f"non-numeric value {text!r} at row {row}, column {column!r}", row, column
        ) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {text!r} at row {row}, column {column!r}", row, column)
    return value


def load_csv(path, schema, standardize=False):
    """Read a headed, comma-separated file into a :class:`Dataset`.

    Parameters
    ----------
    path : str or Path
        CSV file with a header row.
    schema : Schema
        Which columns hold the outcome, treatment, instruments and covariates.
    standardize : bool
        Centre and scale the instrument and covariate columns.

    Raises
    ------
    SchemaError
        A schema column is absent from the header.
    ParseError
        A cell is blank or non-numeric. ``row`` counts data rows from 1, header excluded.
    DimensionError
        Too few rows for the number of regressors.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        missing = [c for c in schema.columns if c not in header]
        if missing:
            raise SchemaError(f"columns not found in header: {missing}")
        idx = [header.index(c) for c in schema.columns]
        rows = []
        for r, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != len(header):
                raise ParseError(
                    f"row {r} has {len(record)} fields, header has {len(header)}", r, None
                )
            rows.append([_parse_cell(record[i], r, header[i]) for i in idx])
    data = np.array(rows, dtype=float).reshape(len(rows), len(idx))
    pz = len(schema.instruments)
    ds = Dataset(
        Y=data[:, 0],
        D=data[:, 1],
        Z=data[:, 2:2 + pz],
        X=data[:, 2 + pz:],
        instrument_names=schema.instruments,
        covariate_names=schema.covariates,
    )
    return ds.standardized() if standardize else ds


def write_csv(path, data, outcome="y", treatment="d"):
    """Write a dataset with a header; floats use their shortest round-trip repr."""
    header = [outcome, treatment, *data.instrument_names, *data.covariate_names]
    block = np.column_stack([data.Y, data.D, data.Z, data.X])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in block:
            writer.writerow([repr(float(v)) for v in row])
    return Schema(outcome, treatment, data.instrument_names, data.covariate_names)


def load_summary(path):
    """Read a summary-statistics JSON document and validate it."""
    doc = json.loads(Path(path).read_text())
    return summary_from_dict(doc)


def summary_from_dict(doc):
    missing = [k for k in SUMMARY_FIELDS if k not in doc]
    if missing:
        raise SchemaError(f"summary document lacks fields {missing}")
    return SummaryStats(
        WtW=np.asarray(doc["WtW"], dtype=float),
        WtY=np.asarray(doc["WtY"], dtype=float),
        WtD=np.asarray(doc["WtD"], dtype=float),
        n=doc["n"],
        sigma_eps_sq=doc["sigma_eps_sq"],
        sigma_delta_sq=doc["sigma_delta_sq"],
        sigma_eps_delta=doc["sigma_eps_delta"],
        p_z=doc.get("p_z"),
    )


def dump_summary(stats, path):
    Path(path).write_text(json.dumps(stats.to_dict(), indent=2))
