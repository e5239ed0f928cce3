"""Domain types, validation, and file schemas.

The types are frozen dataclasses over read-only numpy arrays, so instances
are safe to share across threads.  Constructors reject structural invariant
violations (rho <= 0, non-increasing sequences, non-positive norming
constants, broken interlacing); the asymptotic residual checks are advisory
and live in the ``validate_*`` functions, which report instead of raising.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import InitVar, dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import SchemaError
from .numerics import PI, uniform_grid

__all__ = [
    "ProblemCoefficients",
    "SpectralData",
    "TwoSpectra",
    "KernelField",
    "EigenRecord",
    "ValidationReport",
    "validate_problem",
    "validate_spectral_data",
    "validate_two_spectra",
    "estimate_omega",
    "load_spectral_data",
    "load_two_spectra",
    "load_q_csv",
    "save_q_csv",
]


def _freeze(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass
class ValidationReport:
    """Outcome of a validation pass: empty ``violations`` means valid."""

    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": list(self.violations),
                "warnings": list(self.warnings), "info": dict(self.info)}


@dataclass(frozen=True)
class ProblemCoefficients:
    """The quintuple (q, h, H, H1, H2) on the uniform grid over [0, pi].

    ``rho = H*H1 - H2`` must be positive; this is what makes the boundary
    eigenvalue problem self-adjoint in the extended inner product with the
    1/rho boundary weight.
    """

    grid: np.ndarray
    q_samples: np.ndarray
    h: float
    H: float
    H1: float
    H2: float
    check: InitVar[bool] = True

    def __post_init__(self, check):
        object.__setattr__(self, "grid", _freeze(self.grid))
        object.__setattr__(self, "q_samples", _freeze(self.q_samples))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "H", float(self.H))
        object.__setattr__(self, "H1", float(self.H1))
        object.__setattr__(self, "H2", float(self.H2))
        if check:
            report = validate_problem(self)
            if not report.ok:
                raise ValueError("invalid problem coefficients: " + "; ".join(report.violations))

    @property
    def rho(self) -> float:
        return self.H * self.H1 - self.H2

    @property
    def m(self) -> int:
        return len(self.grid) - 1

    @cached_property
    def omega(self) -> float:
        """h + H + (1/2) * integral of q: the leading eigenvalue shift."""
        return self.h + self.H + 0.5 * float(np.trapezoid(self.q_samples, self.grid))

    @cached_property
    def q_fn(self):
        return CubicSpline(self.grid, self.q_samples)

    @staticmethod
    def constant_q(value: float, h: float, H: float, H1: float, H2: float,
                   m: int = 256) -> "ProblemCoefficients":
        grid = uniform_grid(m)
        return ProblemCoefficients(grid, np.full(m + 1, float(value)), h, H, H1, H2)


@dataclass(frozen=True)
class SpectralData:
    """Eigenvalues paired with norming constants, plus the asymptotic shift.

    lambdas must be strictly increasing (eigenvalues of these problems are
    simple) and every gamma positive.  ``omega`` may be supplied or left to
    be estimated from the eigenvalue asymptotics.
    """

    lambdas: np.ndarray
    gammas: np.ndarray
    omega: float | None = None
    check: InitVar[bool] = True

    def __post_init__(self, check):
        object.__setattr__(self, "lambdas", _freeze(self.lambdas))
        object.__setattr__(self, "gammas", _freeze(self.gammas))
        if self.omega is not None:
            object.__setattr__(self, "omega", float(self.omega))
        if check:
            if len(self.lambdas) != len(self.gammas):
                raise ValueError("lambdas and gammas must have equal length")
            if len(self.lambdas) < 1:
                raise ValueError("need at least one spectral pair")
            if not np.all(np.isfinite(self.lambdas)) or not np.all(np.isfinite(self.gammas)):
                raise ValueError("spectral data must be finite")
            if np.any(np.diff(self.lambdas) <= 0.0):
                raise ValueError("eigenvalues must be strictly increasing")
            if np.any(self.gammas <= 0.0):
                raise ValueError("norming constants must be positive")

    @property
    def n_pairs(self) -> int:
        return len(self.lambdas)

    @cached_property
    def s_values(self) -> np.ndarray:
        """Principal square roots; complex only when lambda_0 < 0."""
        return np.sqrt(self.lambdas.astype(complex))

    def resolved_omega(self) -> float:
        return self.omega if self.omega is not None else estimate_omega(self.lambdas)

    def to_dict(self) -> dict:
        out = {"lambdas": list(map(float, self.lambdas)),
               "gammas": list(map(float, self.gammas))}
        if self.omega is not None:
            out["omega"] = float(self.omega)
        return out

    @staticmethod
    def from_dict(obj: dict, check: bool = True) -> "SpectralData":
        for key in ("lambdas", "gammas"):
            if key not in obj:
                raise SchemaError(f"spectral data is missing field '{key}'")
            if not isinstance(obj[key], (list, tuple)):
                raise SchemaError(f"field '{key}' must be an array of numbers")
        omega = obj.get("omega")
        if omega is not None and not isinstance(omega, (int, float)):
            raise SchemaError("field 'omega' must be a number")
        try:
            return SpectralData(np.asarray(obj["lambdas"], dtype=float),
                                np.asarray(obj["gammas"], dtype=float),
                                omega, check=check)
        except ValueError as exc:
            raise SchemaError(str(exc)) from exc


@dataclass(frozen=True)
class TwoSpectra:
    """Two strictly interlacing spectra lambda_0 < mu_0 < lambda_1 < mu_1 < ...

    The second spectrum belongs to the problem whose left Robin coefficient
    is raised by sigma > 0 (same q and same right boundary condition).
    """

    lambdas: np.ndarray
    mus: np.ndarray
    sigma: float | None = None
    omega: float | None = None
    check: InitVar[bool] = True

    def __post_init__(self, check):
        object.__setattr__(self, "lambdas", _freeze(self.lambdas))
        object.__setattr__(self, "mus", _freeze(self.mus))
        if self.sigma is not None:
            object.__setattr__(self, "sigma", float(self.sigma))
        if self.omega is not None:
            object.__setattr__(self, "omega", float(self.omega))
        if check:
            if len(self.lambdas) != len(self.mus):
                raise ValueError("lambdas and mus must have equal length")
            if len(self.lambdas) < 2:
                raise ValueError("need at least two pairs")
            if not _interlaces(self.lambdas, self.mus):
                raise ValueError("sequences must interlace strictly: "
                                 "lambda_0 < mu_0 < lambda_1 < mu_1 < ...")
            if self.sigma is not None and self.sigma <= 0.0:
                raise ValueError("sigma must be positive")

    @property
    def n_pairs(self) -> int:
        return len(self.lambdas)

    def to_dict(self) -> dict:
        out = {"lambdas": list(map(float, self.lambdas)),
               "mus": list(map(float, self.mus))}
        if self.sigma is not None:
            out["sigma"] = float(self.sigma)
        return out

    @staticmethod
    def from_dict(obj: dict, check: bool = True) -> "TwoSpectra":
        for key in ("lambdas", "mus"):
            if key not in obj:
                raise SchemaError(f"two-spectra data is missing field '{key}'")
            if not isinstance(obj[key], (list, tuple)):
                raise SchemaError(f"field '{key}' must be an array of numbers")
        sigma = obj.get("sigma")
        if sigma is not None and not isinstance(sigma, (int, float)):
            raise SchemaError("field 'sigma' must be a number")
        try:
            return TwoSpectra(np.asarray(obj["lambdas"], dtype=float),
                              np.asarray(obj["mus"], dtype=float),
                              sigma, check=check)
        except ValueError as exc:
            raise SchemaError(str(exc)) from exc


def _interlaces(lambdas: np.ndarray, mus: np.ndarray) -> bool:
    merged = np.empty(2 * len(lambdas))
    merged[0::2] = lambdas
    merged[1::2] = mus
    return bool(np.all(np.diff(merged) > 0.0))


@dataclass(frozen=True)
class KernelField:
    """Samples of a kernel on the triangle 0 <= t <= x <= pi.

    kind "F": input kernel, defined on the whole square and stored exactly
    symmetric.  kind "K": transformation kernel, lower triangular with
    zeros above the diagonal; K(0, 0) equals the recovered Robin
    coefficient h.
    """

    grid: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "grid", _freeze(self.grid))
        object.__setattr__(self, "values", _freeze(self.values))
        n = len(self.grid)
        if self.values.shape != (n, n):
            raise ValueError("kernel values must be square over the grid")
        if self.kind == "F":
            if not np.array_equal(self.values, self.values.T):
                raise ValueError("F kernel must be stored exactly symmetric")
        elif self.kind == "K":
            if np.any(self.values[np.triu_indices(n, k=1)] != 0.0):
                raise ValueError("K kernel must vanish above the diagonal")
            if not np.all(np.isfinite(np.diag(self.values))):
                raise ValueError("K kernel diagonal must be finite")
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    def diagonal(self) -> np.ndarray:
        return np.diag(self.values)

    def row(self, i: int) -> np.ndarray:
        return self.values[i]


@dataclass(frozen=True)
class EigenRecord:
    """One eigenvalue with its endpoint data, norming constant, and the
    proportionality factor k between the two characteristic solutions."""

    lam: float
    phi_end: tuple[float, float]
    gamma: float
    k: float
    phi_samples: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "phi_end", (float(self.phi_end[0]), float(self.phi_end[1])))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "k", float(self.k))
        if self.phi_samples is not None:
            object.__setattr__(self, "phi_samples", _freeze(self.phi_samples))
        if not self.gamma > 0.0:
            raise ValueError("norming constant must be positive")
        if self.k == 0.0:
            raise ValueError("k must be nonzero")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_problem(p: ProblemCoefficients) -> ValidationReport:
    """Check the structural constraints on a coefficient set.

    Reports every violated invariant; never raises.
    """
    report = ValidationReport()
    rho = p.H * p.H1 - p.H2
    report.info["rho"] = rho
    if not rho > 0.0:
        report.violations.append(f"rho = H*H1 - H2 = {rho:.6g} must be positive")
    for name in ("h", "H", "H1", "H2"):
        if not math.isfinite(getattr(p, name)):
            report.violations.append(f"{name} must be finite")
    grid = p.grid
    if len(grid) < 3:
        report.violations.append("grid must have at least 3 nodes")
    else:
        if abs(grid[0]) > 1e-12 or abs(grid[-1] - PI) > 1e-12:
            report.violations.append("grid must span [0, pi]")
        d = np.diff(grid)
        if np.any(d <= 0.0):
            report.violations.append("grid must be strictly increasing")
        elif np.max(np.abs(d - d[0])) > 1e-9:
            report.violations.append("grid must be uniform")
    if len(p.q_samples) != len(grid):
        report.violations.append("q_samples must align with the grid")
    if not np.all(np.isfinite(p.q_samples)):
        report.violations.append("q_samples must be finite")
    return report


def fit_asymptotic_constant(n: np.ndarray, y: np.ndarray) -> float:
    """Limit of y_n = c + b/n + l2-noise: weighted fit of [1, 1/n], weights n^2.

    The 1/n regressor absorbs the first-order finite-index bias that a
    plain weighted mean would fold into the constant.
    """
    w = np.sqrt(n.astype(float) ** 2)
    a = np.stack([np.ones_like(n, dtype=float), 1.0 / n], axis=1)
    coef, *_ = np.linalg.lstsq(a * w[:, None], y * w, rcond=None)
    return float(coef[0])


def estimate_omega(lambdas: np.ndarray) -> float:
    """Asymptotic shift from eigenvalues alone.

    Weighted least squares of n*pi*(s_n - (n-1)) over the upper half of the
    supplied indices (weights n^2, constant plus 1/n model); the late tail
    isolates the shift because the remainder decays in l_2.
    """
    lam = np.asarray(lambdas, dtype=float)
    if len(lam) < 5:
        raise ValueError("need at least 5 eigenvalues to estimate omega")
    n_top = len(lam) - 1
    n = np.arange(max(2, n_top // 2), n_top + 1)
    vals = lam[n]
    if np.any(vals <= 0.0):
        raise ValueError("upper-half eigenvalues must be positive")
    s = np.sqrt(vals)
    y = n * PI * (s - (n - 1))
    return fit_asymptotic_constant(n, y)


def _l2_residual_check(zeta: np.ndarray, label: str, report: ValidationReport,
                       floor: float, strict: bool):
    # Finite-data proxy for an l_2 condition: the upper-half mass of the
    # residuals must not exceed the lower-half mass (or an absolute floor).
    sq = np.abs(zeta) ** 2
    half = len(sq) // 2
    lower = float(np.sum(sq[:half]))
    upper = float(np.sum(sq[half:]))
    report.info[f"{label}_mass_lower"] = lower
    report.info[f"{label}_mass_upper"] = upper
    if upper > max(2.0 * lower, floor):
        msg = (f"{label} residuals grow with index "
               f"(upper-half mass {upper:.3g} vs lower-half {lower:.3g})")
        (report.violations if strict else report.warnings).append(msg)


def validate_spectral_data(d: SpectralData, *, strict: bool = False,
                           l2_floor: float = 4.0) -> ValidationReport:
    """Check distinctness, positivity, and the asymptotic residuals.

    The residuals zeta_n = n*(s_n - (n-1) - omega/(n pi)) and
    zeta'_n = n*(gamma_n - pi/2) must look square-summable; with finitely
    many pairs this is necessarily a heuristic (bounded, non-growing
    partial sums), reported as warnings unless ``strict``.
    """
    report = ValidationReport()
    lam = d.lambdas
    gam = d.gammas
    if len(lam) != len(gam):
        report.violations.append("lambdas and gammas must have equal length")
        return report
    if np.any(np.diff(lam) <= 0.0):
        report.violations.append("eigenvalues must be strictly increasing (and distinct)")
    if np.any(gam <= 0.0):
        bad = int(np.argmax(gam <= 0.0))
        report.violations.append(f"gamma_{bad} = {gam[bad]:.6g} must be positive")
    if not report.ok:
        return report
    if d.omega is None:
        try:
            omega = estimate_omega(lam)
            report.info["omega_estimate"] = omega
        except ValueError as exc:
            report.warnings.append(f"omega not estimable: {exc}")
            return report
    else:
        omega = d.omega
        report.info["omega"] = omega
    n = np.arange(1, len(lam))
    s = np.sqrt(lam[1:].astype(complex))
    zeta = n * (s - (n - 1) - omega / (n * PI))
    zeta_p = n * (gam[1:] - PI / 2.0)
    _l2_residual_check(zeta, "eigenvalue", report, l2_floor, strict)
    _l2_residual_check(zeta_p, "norming-constant", report, l2_floor, strict)
    return report


def validate_two_spectra(ts: TwoSpectra, *, strict: bool = False) -> ValidationReport:
    """Check strict interlacing and sigma positivity."""
    report = ValidationReport()
    if len(ts.lambdas) != len(ts.mus):
        report.violations.append("lambdas and mus must have equal length")
        return report
    if not _interlaces(ts.lambdas, ts.mus):
        report.violations.append("sequences must interlace strictly")
    if ts.sigma is not None:
        report.info["sigma"] = ts.sigma
        if ts.sigma <= 0.0:
            report.violations.append(f"sigma = {ts.sigma:.6g} must be positive")
    return report


# ---------------------------------------------------------------------------
# File schemas
# ---------------------------------------------------------------------------


def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON in {path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: top-level JSON value must be an object")
    return obj


def load_spectral_data(path, check: bool = True) -> SpectralData:
    """Read {"lambdas": [...], "gammas": [...], "omega": optional}."""
    return SpectralData.from_dict(_load_json(path), check=check)


def load_two_spectra(path, check: bool = True) -> TwoSpectra:
    """Read {"lambdas": [...], "mus": [...], "sigma": optional}."""
    return TwoSpectra.from_dict(_load_json(path), check=check)


def load_q_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column CSV (header row ``x,q``) of potential samples."""
    xs: list[float] = []
    qs: list[float] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise SchemaError(f"{path}: expected header row 'x,q'")
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise SchemaError(f"{path}: line {ln}: expected two columns")
            try:
                xs.append(float(row[0]))
                qs.append(float(row[1]))
            except ValueError as exc:
                raise SchemaError(f"{path}: line {ln}: {exc}") from exc
    if len(xs) < 3:
        raise SchemaError(f"{path}: need at least 3 sample rows")
    return np.asarray(xs), np.asarray(qs)


def save_q_csv(path, x: np.ndarray, q: np.ndarray):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "q"])
        for xi, qi in zip(x, q):
            writer.writerow([f"{xi:.17g}", f"{qi:.17g}"])
