"""Direct problem: spectrum, norming constants, and the characteristic
function of a given coefficient set.

The two characteristic solutions are
    phi:  phi(0) = 1,  phi'(0) = h,
    psi:  psi(pi) = -lam + H1,  psi'(pi) = lam*H - H2,
and the characteristic function
    Phi(lam) = lam*(phi'(pi) + H*phi(pi)) - H1*phi'(pi) - H2*phi(pi)
vanishes exactly at the eigenvalues.  At an eigenvalue psi = k_n * phi with
k_n != 0, and the norming constant is
    gamma_n = int_0^pi phi^2 dx + (phi'(pi) + H*phi(pi))^2 / rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import EigenRecord, ProblemCoefficients, SpectralData
from .errors import BracketingError, DegeneracyError, MissedRootError
from .numerics import (
    PI,
    QuadratureRule,
    find_root_bracketed,
    integrate_ivp,
    propagate_batch,
)

__all__ = [
    "ForwardSolution",
    "char_function",
    "find_eigenvalues",
    "norming_constant",
    "compute_k",
    "forward_solve",
]

_DEFAULT_TOL = 1e-11


def _char_from_state(p: ProblemCoefficients, lam: float, phi_pi: float, dphi_pi: float) -> float:
    return lam * (dphi_pi + p.H * phi_pi) - p.H1 * dphi_pi - p.H2 * phi_pi


def char_function(p: ProblemCoefficients, lam: float, *, tol: float = _DEFAULT_TOL) -> float:
    """Characteristic function whose zeros are the eigenvalues of p."""
    y, yp = integrate_ivp(p.q_fn, p.grid, (1.0, p.h), lam,
                          x_eval=np.array([0.0, PI]), tol=tol)
    return _char_from_state(p, lam, y[-1], yp[-1])


def _char_batch(p: ProblemCoefficients, lams: np.ndarray, tol: float = 1e-7) -> np.ndarray:
    states = propagate_batch(p.q_fn, (1.0, p.h), lams, tol=tol)
    lams = np.asarray(lams, dtype=float)
    return (lams * (states[:, 1] + p.H * states[:, 0])
            - p.H1 * states[:, 1] - p.H2 * states[:, 0])


def _negative_floor(p: ProblemCoefficients) -> float:
    # Generous lower bound for the lowest eigenvalue: far below both the
    # potential minimum and the H1 barrier no sign change can survive.
    size = 2.0 + abs(p.h) + abs(p.H) + abs(p.H1) + abs(p.H2)
    return min(float(np.min(p.q_samples)), p.H1) - size * size - 1.0


def _scan_lambdas(p: ProblemCoefficients, s_max: float, ds: float) -> np.ndarray:
    s = np.arange(0.0, s_max + ds, ds)
    lams = s * s
    floor = _negative_floor(p)
    if floor < 0.0:
        t = np.arange(ds, math.sqrt(-floor) + ds, ds)
        lams = np.concatenate([-(t * t)[::-1], lams])
    return lams


def find_eigenvalues(p: ProblemCoefficients, count: int, *, tol_root: float = 1e-12,
                     scan_ds: float = 0.1, tol: float = _DEFAULT_TOL) -> np.ndarray:
    """First ``count`` eigenvalues, strictly increasing.

    A sign-change scan on the sqrt(lam) axis (resolution ``scan_ds``,
    extended into lam < 0) brackets the roots; each bracket is polished by
    bisection plus Newton.  The indexing convention carries one extra
    eigenvalue relative to the classical Robin case: s_n approaches n - 1.
    A count mismatch or an index-consistency failure triggers one scan
    refinement before raising.
    """
    if count < 3:
        raise ValueError("count must be at least 3")
    s_max = float(count) + 1.0
    ds = scan_ds
    for attempt in range(3):
        lams = _scan_lambdas(p, s_max, ds)
        vals = _char_batch(p, lams)
        f = lambda L: char_function(p, L, tol=tol)
        roots: list[float] = []
        for i in range(len(lams) - 1):
            fa, fb = vals[i], vals[i + 1]
            if fa == 0.0 or fb == 0.0:
                continue  # a genuinely tiny value re-brackets below
            if math.copysign(1.0, fa) == math.copysign(1.0, fb):
                continue
            a, b = lams[i], lams[i + 1]
            mid = 0.5 * (a + b)
            xtol = tol_root * max(1.0, 2.0 * math.sqrt(abs(mid)))
            try:
                roots.append(find_root_bracketed(f, a, b, xtol=xtol))
            except BracketingError:
                # Scan-accuracy sign noise next to a root sitting near a
                # scan node; retry on the widened cell.
                a = lams[max(i - 1, 0)]
                b = lams[min(i + 2, len(lams) - 1)]
                try:
                    roots.append(find_root_bracketed(f, a, b, xtol=xtol))
                except BracketingError:
                    pass
        # Scan nodes that are numerically zero are roots themselves.
        for i in np.nonzero(vals == 0.0)[0]:
            roots.append(float(lams[i]))
        roots = _dedupe_sorted(sorted(roots))
        if len(roots) >= count and _index_consistent(roots[:count]):
            return np.asarray(roots[:count])
        ds /= 4.0
    raise MissedRootError(
        f"found {len(roots)} eigenvalues, expected at least {count} with "
        f"consistent indexing; scan resolution {ds * 4.0:.3g}")


def _dedupe_sorted(roots: list[float]) -> list[float]:
    out: list[float] = []
    for r in roots:
        if out and abs(r - out[-1]) <= 1e-8 * (1.0 + abs(r)):
            continue
        out.append(r)
    return out


def _index_consistent(roots: list[float]) -> bool:
    # In the upper half of the list s_n must sit within half a unit of n-1.
    n_top = len(roots) - 1
    for n in range(max(2, n_top // 2), n_top + 1):
        if roots[n] <= 0.0:
            return False
        if abs(math.sqrt(roots[n]) - (n - 1)) > 0.49:
            return False
    return True


def _phi_quadrature(p: ProblemCoefficients, lam: float, tol: float,
                    with_grid: bool = False):
    """phi on a Gauss-Legendre composite rule (plus the grid if asked).

    The panel count scales with sqrt(lam) so the oscillation stays resolved.
    """
    s_scale = math.sqrt(max(lam, 1.0))
    panels = max(8, int(math.ceil(1.5 * s_scale)))
    rule = QuadratureRule.gauss_legendre(0.0, PI, panels, order=12)
    if with_grid:
        pts = np.unique(np.concatenate([p.grid, rule.nodes, [0.0, PI]]))
    else:
        pts = np.unique(np.concatenate([rule.nodes, [0.0, PI]]))
    y, yp = integrate_ivp(p.q_fn, p.grid, (1.0, p.h), lam, x_eval=pts, tol=tol)
    node_idx = np.searchsorted(pts, rule.nodes)
    out = {
        "rule": rule,
        "phi_nodes": y[node_idx],
        "phi_pi": float(y[-1]),
        "dphi_pi": float(yp[-1]),
    }
    if with_grid:
        grid_idx = np.searchsorted(pts, p.grid)
        out["phi_grid"] = y[grid_idx]
    return out


def norming_constant(p: ProblemCoefficients, lam_n: float, *, tol: float = _DEFAULT_TOL) -> float:
    """Squared norm of the eigen-element at lam_n.

    Gauss-Legendre panels are used for the phi^2 integral (the shared
    trapezoid grid would alias the oscillation at large lam).
    """
    data = _phi_quadrature(p, lam_n, tol)
    integral = data["rule"].integrate(data["phi_nodes"] ** 2)
    boundary = (data["dphi_pi"] + p.H * data["phi_pi"]) ** 2 / p.rho
    return float(integral + boundary)


def compute_k(p: ProblemCoefficients, lam_n: float, *, tol: float = _DEFAULT_TOL,
              x_eval: np.ndarray | None = None):
    """Proportionality factor k_n = psi(0, lam_n) (phi(0) = 1 by normalization).

    psi is integrated backward from its terminal data at pi.  Returns
    (k, psi_samples) where the samples align with ``x_eval`` (default: the
    grid).
    """
    terminal = (-lam_n + p.H1, lam_n * p.H - p.H2)
    y, yp = integrate_ivp(p.q_fn, p.grid, terminal, lam_n, direction="backward",
                          x_eval=x_eval, tol=tol)
    k = float(y[0])
    if abs(k) < 1e-12:
        raise DegeneracyError(f"k vanished at lam={lam_n}: not an eigenvalue of this problem?")
    return k, y


def _chi_derivative_fd(p: ProblemCoefficients, lam_n: float, tol: float) -> float:
    # Central differences; the characteristic function is entire, so this
    # is benign at the prescribed step.
    delta = 1e-5 * max(1.0, abs(lam_n))
    return (char_function(p, lam_n + delta, tol=tol)
            - char_function(p, lam_n - delta, tol=tol)) / (2.0 * delta)


@dataclass(frozen=True)
class ForwardSolution:
    """Spectrum of a problem with per-eigenvalue records and diagnostics.

    diagnostics carries the relative residuals of the identity
    d(chi)/d(lam) at lam_n = k_n * gamma_n and of the proportionality
    psi = k_n phi, plus a flag for eigenvalues sitting at the H1 resonance.
    """

    problem: ProblemCoefficients
    records: tuple[EigenRecord, ...]
    diagnostics: dict

    def __post_init__(self):
        lams = self.lambdas
        if np.any(np.diff(lams) <= 0.0):
            raise ValueError("eigenvalues must be strictly increasing and simple")

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([r.lam for r in self.records])

    @property
    def gammas(self) -> np.ndarray:
        return np.array([r.gamma for r in self.records])

    @property
    def ks(self) -> np.ndarray:
        return np.array([r.k for r in self.records])

    @cached_property
    def char_fn(self):
        p = self.problem
        return lambda lam: char_function(p, lam)

    def to_spectral_data(self) -> SpectralData:
        return SpectralData(self.lambdas, self.gammas, omega=self.problem.omega)

    def a_values(self) -> np.ndarray:
        """A_n = k_n * phi(pi, lam_n); equals -lam_n + H1 for exact data."""
        return np.array([r.k * r.phi_end[0] for r in self.records])

    def b_values(self) -> np.ndarray:
        """B_n = k_n * phi'(pi, lam_n); equals H*lam_n - H2 for exact data."""
        return np.array([r.k * r.phi_end[1] for r in self.records])


def forward_solve(p: ProblemCoefficients, count: int, *, keep_phi: bool = True,
                  tol: float = _DEFAULT_TOL) -> ForwardSolution:
    """Eigenvalues, norming constants, and k factors for the first ``count``
    indices, with the identity residuals recorded in the diagnostics."""
    lams = find_eigenvalues(p, count, tol=tol)
    records = []
    chi_dot_rel = []
    prop_rel = []
    near_h1 = []
    for lam in lams:
        data = _phi_quadrature(p, lam, tol, with_grid=True)
        gamma = float(data["rule"].integrate(data["phi_nodes"] ** 2)
                      + (data["dphi_pi"] + p.H * data["phi_pi"]) ** 2 / p.rho)
        k, psi_grid = compute_k(p, lam, tol=tol)
        phi_grid = data["phi_grid"]
        scale = float(np.max(np.abs(psi_grid)))
        prop_rel.append(float(np.max(np.abs(psi_grid - k * phi_grid))) / scale)
        chi_dot = _chi_derivative_fd(p, lam, tol)
        chi_dot_rel.append(abs(chi_dot - k * gamma) / max(abs(k * gamma), 1e-300))
        near_h1.append(abs(lam - p.H1) < 1e-8 * max(1.0, abs(p.H1)))
        records.append(EigenRecord(
            lam=lam,
            phi_end=(data["phi_pi"], data["dphi_pi"]),
            gamma=gamma,
            k=k,
            phi_samples=phi_grid if keep_phi else None,
        ))
    diagnostics = {
        "chi_dot_identity_rel": np.array(chi_dot_rel),
        "proportionality_rel": np.array(prop_rel),
        "lambda_at_h1": np.array(near_h1, dtype=bool),
    }
    return ForwardSolution(problem=p, records=tuple(records), diagnostics=diagnostics)
