"""Command-line front end: file ingestion, pipeline dispatch, and
deterministic artifact persistence.

Subcommands:
    forward             problem JSON -> spectrum.json, records.csv
    invert-spectral     spectral-data JSON -> result.json, q.csv, ...
    invert-two-spectra  two-spectra JSON -> result.json, q.csv, ...
    roundtrip           seeded synthetic problem -> roundtrip.json
    validate            either data schema -> validation.json

Exit status: 0 on success, 2 on validation or schema failure, 3 on
numerical failure.  All numbers are serialized at 17 significant digits so
artifacts are byte-identical across runs of the same input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    SpectralData,
    TwoSpectra,
    load_q_csv,
    load_spectral_data,
    load_two_spectra,
    save_q_csv,
    validate_spectral_data,
    validate_two_spectra,
)
from .errors import InvSturmError, SchemaError
from .forward import forward_solve
from .glm import ReconstructOptions, reconstruct_from_spectral_data
from .numerics import uniform_grid
from .synthetic import random_problem
from .twospectra import reconstruct_from_two_spectra
from .core import ProblemCoefficients

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


@dataclass
class RunConfig:
    subcommand: str
    input: str | None
    out: str
    n: int = 40
    m: int = 256
    tail_mode: str = "truncate"
    strict: bool = False
    sigma: float | None = None
    omega: float | None = None
    tol_kappa: float = 5e-2
    seed: int = 0

    def check(self):
        if self.n < 4:
            raise ValueError("--N must be at least 4")
        if self.m < 32:
            raise ValueError("--M must be at least 32")
        if not self.out:
            raise ValueError("--out must be a non-empty path")
        if self.subcommand != "roundtrip" and not self.input:
            raise ValueError("--input is required")


# ---------------------------------------------------------------------------
# Serialization helpers
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return "null"
        return f"{v:.17g}"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in value.items()) + "}"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_json(path: Path, obj: dict):
    path.write_text(_fmt(obj) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]):
    rows = ["" for _ in range(len(columns[0]))]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(columns[0])):
            fh.write(",".join(f"{float(col[i]):.17g}" for col in columns) + "\n")
    del rows


def _input_hash(config: RunConfig) -> str:
    if config.input:
        return hashlib.sha256(Path(config.input).read_bytes()).hexdigest()
    canonical = f"seed={config.seed};N={config.n};M={config.m}"
    return hashlib.sha256(canonical.encode()).hexdigest()


def _result_header(config: RunConfig) -> dict:
    return {
        "version": __version__,
        "input_sha256": _input_hash(config),
        "config": {
            "subcommand": config.subcommand,
            "N": config.n,
            "M": config.m,
            "tail_mode": config.tail_mode,
            "strict": config.strict,
            "sigma": config.sigma,
            "omega": config.omega,
            "tol_kappa": config.tol_kappa,
            "seed": config.seed,
        },
    }


def _options(config: RunConfig) -> ReconstructOptions:
    return ReconstructOptions(m=config.m, tail_mode=config.tail_mode,
                              tol_kappa=config.tol_kappa, strict=config.strict)


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------


def _load_problem(path: str, m: int) -> ProblemCoefficients:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON in {path}: line {exc.lineno}: {exc.msg}") from exc
    for key in ("h", "H", "H1", "H2"):
        if key not in obj or not isinstance(obj[key], (int, float)):
            raise SchemaError(f"problem file is missing numeric field '{key}'")
    if "q_csv" in obj:
        x, q = load_q_csv(Path(path).parent / obj["q_csv"])
    elif "x" in obj and "q" in obj:
        x = np.asarray(obj["x"], dtype=float)
        q = np.asarray(obj["q"], dtype=float)
    else:
        x = uniform_grid(m)
        q = np.zeros(m + 1)
    try:
        return ProblemCoefficients(x, q, obj["h"], obj["H"], obj["H1"], obj["H2"])
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def _emit_reconstruction(result, out: Path, config: RunConfig, extra: dict | None = None):
    coeffs = result.coefficients
    grid = coeffs.grid
    save_q_csv(out / "q.csv", grid, coeffs.q_samples)
    _write_csv(out / "K_diag.csv", ["x", "K"], [grid, result.kernel.diagonal()])
    m = len(grid) - 1
    slice_idx = [m // 4, m // 2, (3 * m) // 4, m]
    header = ["t"] + [f"F_at_x_{grid[i]:.6g}" for i in slice_idx]
    _write_csv(out / "F_slices.csv", header,
               [grid] + [result.input_kernel.values[i] for i in slice_idx])
    payload = _result_header(config)
    payload["coefficients"] = {
        "h": coeffs.h, "H": coeffs.H, "H1": coeffs.H1, "H2": coeffs.H2,
        "rho": coeffs.rho,
    }
    if extra:
        payload["coefficients"].update(extra.pop("coefficients", {}))
        payload.update(extra)
    payload["q"] = "q.csv"
    payload["kappa"] = list(result.kappa)
    payload["diagnostics"] = result.diagnostics.to_dict()
    payload["diagnostics"]["glm_residuals"] = None  # per-x residuals stay in memory
    write_json(out / "result.json", payload)


def _run_forward(config: RunConfig, out: Path) -> int:
    problem = _load_problem(config.input, config.m)
    solution = forward_solve(problem, config.n)
    data = solution.to_spectral_data()
    payload = _result_header(config)
    payload.update(data.to_dict())
    write_json(out / "spectrum.json", payload)
    _write_csv(out / "records.csv", ["n", "lambda", "gamma", "k"],
               [np.arange(config.n), solution.lambdas, solution.gammas, solution.ks])
    return EXIT_OK


def _run_invert_spectral(config: RunConfig, out: Path) -> int:
    data = load_spectral_data(config.input)
    if config.omega is not None:
        data = SpectralData(data.lambdas, data.gammas, config.omega)
    report = validate_spectral_data(data, strict=config.strict)
    write_json(out / "validation.json", report.to_dict())
    if not report.ok:
        print("validation failed:", "; ".join(report.violations), file=sys.stderr)
        return EXIT_VALIDATION
    result = reconstruct_from_spectral_data(data, _options(config))
    _emit_reconstruction(result, out, config)
    return EXIT_OK


def _run_invert_two_spectra(config: RunConfig, out: Path) -> int:
    ts = load_two_spectra(config.input)
    if config.sigma is not None:
        ts = TwoSpectra(ts.lambdas, ts.mus, config.sigma)
    report = validate_two_spectra(ts, strict=config.strict)
    write_json(out / "validation.json", report.to_dict())
    if not report.ok:
        print("validation failed:", "; ".join(report.violations), file=sys.stderr)
        return EXIT_VALIDATION
    result = reconstruct_from_two_spectra(ts, _options(config), sigma=config.sigma)
    extra = {
        "coefficients": {"h_tilde": result.h_tilde},
        "sigma": result.sigma,
        "mu_deviation": result.mu_deviation,
        "interlace_ok": result.interlace_ok,
    }
    _emit_reconstruction(result.base, out, config, extra)
    if result.check_spectrum is not None:
        _write_csv(out / "mu_check.csv", ["n", "mu_input", "mu_recomputed", "deviation"],
                   [np.arange(ts.n_pairs), ts.mus, result.check_spectrum,
                    result.check_spectrum - ts.mus])
    return EXIT_OK


def _run_roundtrip(config: RunConfig, out: Path) -> int:
    problem = random_problem(config.seed, m=config.m)
    solution = forward_solve(problem, config.n)
    data = solution.to_spectral_data()
    result = reconstruct_from_spectral_data(data, _options(config))
    recovered = forward_solve(result.coefficients, config.n)
    spectrum_dev = float(np.max(np.abs(recovered.lambdas - solution.lambdas)))
    q_err = float(np.sqrt(np.trapezoid(
        (result.coefficients.q_samples - problem.q_samples) ** 2, problem.grid)))
    save_q_csv(out / "q_true.csv", problem.grid, problem.q_samples)
    save_q_csv(out / "q_recovered.csv", problem.grid, result.coefficients.q_samples)
    payload = _result_header(config)
    payload["true_coefficients"] = {
        "h": problem.h, "H": problem.H, "H1": problem.H1, "H2": problem.H2,
        "rho": problem.rho,
    }
    payload["recovered_coefficients"] = {
        "h": result.coefficients.h, "H": result.coefficients.H,
        "H1": result.coefficients.H1, "H2": result.coefficients.H2,
        "rho": result.coefficients.rho,
    }
    payload["spectrum_max_deviation"] = spectrum_dev
    payload["q_l2_error"] = q_err
    payload["kappa"] = list(result.kappa)
    payload["diagnostics"] = result.diagnostics.to_dict()
    payload["diagnostics"]["glm_residuals"] = None
    write_json(out / "roundtrip.json", payload)
    return EXIT_OK


def _run_validate(config: RunConfig, out: Path) -> int:
    try:
        with open(config.input, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON in {config.input}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise SchemaError("top-level JSON value must be an object")
    if "mus" in obj:
        ts = TwoSpectra.from_dict(obj, check=False)
        report = validate_two_spectra(ts, strict=config.strict)
    else:
        data = SpectralData.from_dict(obj, check=False)
        report = validate_spectral_data(data, strict=config.strict)
    payload = _result_header(config)
    payload.update(report.to_dict())
    write_json(out / "validation.json", payload)
    if not report.ok:
        print("validation failed:", "; ".join(report.violations), file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def run(config: RunConfig) -> int:
    """Dispatch one run; returns the process exit status."""
    try:
        config.check()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    handlers = {
        "forward": _run_forward,
        "invert-spectral": _run_invert_spectral,
        "invert-two-spectra": _run_invert_two_spectra,
        "roundtrip": _run_roundtrip,
        "validate": _run_validate,
    }
    try:
        return handlers[config.subcommand](config, out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InvSturmError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invsturm",
        description="Direct and inverse Sturm-Liouville problems with the "
                    "eigenvalue parameter in one boundary condition.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, needs_input in (("forward", True), ("invert-spectral", True),
                              ("invert-two-spectra", True), ("roundtrip", False),
                              ("validate", True)):
        sp = sub.add_parser(name)
        sp.add_argument("--input", required=needs_input)
        sp.add_argument("--out", required=True)
        sp.add_argument("--N", dest="n", type=int, default=40,
                        help="eigenvalue count / truncation")
        sp.add_argument("--M", dest="m", type=int, default=256, help="grid size")
        sp.add_argument("--tail-mode", dest="tail_mode",
                        choices=["truncate", "first-order"], default="truncate")
        sp.add_argument("--strict", action="store_true")
        sp.add_argument("--sigma", type=float, default=None)
        sp.add_argument("--omega", type=float, default=None)
        sp.add_argument("--tol-kappa", dest="tol_kappa", type=float, default=5e-2)
        sp.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = RunConfig(subcommand=args.subcommand, input=getattr(args, "input", None),
                       out=args.out, n=args.n, m=args.m, tail_mode=args.tail_mode,
                       strict=args.strict, sigma=args.sigma, omega=args.omega,
                       tol_kappa=args.tol_kappa, seed=args.seed)
    status = run(config)
    if argv is None:
        sys.exit(status)
    return status


if __name__ == "__main__":
    main()
