"""Command-line driver: ``jumpgen <command> --config path [--lambda x] [--seed n] [--out dir]``.

Exit status is 0 when every verdict passes, 1 when a verdict fails (failing
check names go to stderr) and 2 for usage or configuration errors, which are
reported with the offending line of the config file.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import asymptotics, evolution, mc_oracle, schrodinger
from .errors import JumpgenError
from .grid import Field, Grid, make_grid, read_field_csv, write_field_csv
from .kernels import KernelSpec, sample_kernel, tail_class
from .reports import Check, Report, check_upper
from .resolvent import (
    apply_generator,
    resolvent_kernel_neumann,
    resolvent_kernel_spectral,
)

COMMANDS = ("resolvent", "groundstate", "evolve", "mc-oracle", "verify")

# Named tolerances; any of them can be overridden under "tolerances" in the config.
DEFAULT_TOLERANCES = {
    "mass": 1e-8,  # |lam * integral(G) - 1|
    "neumann": 1e-8,  # sup-norm truncation target of the series solver
    "cross_solver_slack": 1e-10,  # extra slack on |neumann - spectral|
    "exponent": 0.15,  # fitted power vs d + alpha
    "rate": 0.03,  # relative error of fitted exponential rates
    "slope": 0.05,  # |slope - 1/2| in the square-root law
    "slope_slack": 0.25,  # sup-amplitude slope floor below -(2 + d + alpha)
    "spread_factor": 2.0,  # max/min of lam * G * (1+|x|)^(d+alpha) across the sweep
    "power_iteration": 1e-10,  # sup residual stopping rule
    "groundstate_residual": 1e-6,  # resolvent-representation mismatch of psi
    "stationarity": 1e-9,  # sup |L0 u_hat - m u_hat + f|
    "envelope_slack": 1.01,  # factor on exp(-m t) sup f / m
    "stationary_exponent": 0.2,  # tail power of u_hat vs d + min(alpha, alpha_1)
    "mc_sigmas": 3.0,  # per-cell agreement band in standard errors
    "mc_fraction": 0.99,  # share of cells that must fall inside the band
    "mean_k": 0.01,  # relative error of the mean stopping index
}

DEFAULT_OUTPUT_DIR = "jumpgen_out"


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ config


def _schema(name: str) -> dict:
    text = resources.files("jumpgen").joinpath("schema", name).read_text(encoding="utf-8")
    return json.loads(text)


def _line_of(text: str, path) -> int:
    """Best-effort line of the value at a JSON path (keys are searched in order)."""
    pos = 0
    for part in path:
        if isinstance(part, str):
            m = re.compile(r'"' + re.escape(part) + r'"\s*:').search(text, pos)
            if m is None:
                break
            pos = m.start()
    return text.count("\n", 0, pos) + 1


def _fmt_path(path) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else part)
    return out or "<root>"


def load_config(path: str | Path, command: str) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}:1: config must be a JSON object")
    if "command" in cfg and cfg["command"] != command:
        raise UsageError(
            f"{path}:{_line_of(text, ['command'])}: config is for {cfg['command']!r}, not {command!r}"
        )
    cfg["command"] = command
    validator = jsonschema.Draft202012Validator(_schema("experiment.json"))
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (_line_of(text, e.absolute_path), e.message))
    if errors:
        lines = [f"{path}:{_line_of(text, e.absolute_path)}: {_fmt_path(e.absolute_path)}: {e.message}"
                 for e in errors]
        raise UsageError("\n".join(lines))
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(cfg.get("tolerances", {}))
    cfg["tolerances"] = tol
    cfg["_base_dir"] = str(path.parent)
    return cfg


def _resolve(cfg: dict, rel: str) -> Path:
    p = Path(rel)
    return p if p.is_absolute() else Path(cfg["_base_dir"]) / p


def _grid(cfg: dict) -> Grid:
    g = cfg["grid"]
    return make_grid(g["dim"], float(g["extent"]), g["points"])


def _kernel(cfg: dict, grid: Grid) -> KernelSpec:
    data = dict(cfg["kernel"])
    data.setdefault("dim", grid.dim)
    spec = KernelSpec.from_dict(data, base_dir=cfg["_base_dir"])
    if spec.dim != grid.dim:
        raise UsageError(f"kernel dim {spec.dim} does not match grid dim {grid.dim}")
    return spec


# ----------------------------------------------------------------- outputs


def _lam_tag(lam: float) -> str:
    return f"{lam:g}"


def _write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _fmt(v: float) -> str:
    return "nan" if not math.isfinite(v) else f"{v:.17g}"


def write_plot_data(f: Field, path: Path) -> None:
    """x, value and the log-scaled columns; d=2 fields become shell-averaged radial profiles."""
    grid = f.grid
    if grid.dim == 1:
        x, v = grid.axis(), f.values
    else:
        h = grid.spacing
        shell = np.floor(grid.radius() / h + 0.5).astype(np.int64)
        pop = np.bincount(shell)
        tot = np.bincount(shell, weights=f.values)
        keep = pop > 0
        x = np.nonzero(keep)[0] * h
        v = tot[keep] / pop[keep]
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,value,log10_1p_abs_x,log10_value\n")
        for xi, vi in zip(x, v):
            lv = math.log10(vi) if vi > 0 else math.nan
            fh.write(f"{_fmt(xi)},{_fmt(vi)},{_fmt(math.log10(1 + abs(xi)))},{_fmt(lv)}\n")


def _emit_field(f: Field, out: Path, stem: str, sidecar: dict | None = None) -> None:
    write_field_csv(f, out / f"{stem}.csv")
    write_plot_data(f, out / "plot_data" / f"{stem}.csv")
    if sidecar is not None:
        _write_json(out / f"{stem}.json", sidecar)


def _merge(title: str, parts: list[Report], lambdas=None) -> Report:
    merged = Report(title, lambda_grid=lambdas)
    for part in parts:
        merged.checks.extend(part.checks)
        merged.notices.extend(part.notices)
    merged.window = [p.window for p in parts] if any(p.window is not None for p in parts) else None
    merged.data = {"reports": [p.to_dict() for p in parts]}
    return merged


# ---------------------------------------------------------------- commands


def run_resolvent(cfg: dict, out: Path) -> Report:
    tol = cfg["tolerances"]
    grid = _grid(cfg)
    spec = _kernel(cfg, grid)
    a = sample_kernel(spec, grid)
    method = cfg.get("method", "spectral")
    parts = []
    for lam in cfg["lambdas"]:
        rep = Report(f"resolvent[lambda={_lam_tag(lam)}]", lambda_grid=[lam])
        results = {}
        if method in ("spectral", "both"):
            results["spectral"] = resolvent_kernel_spectral(a, lam)
        if method in ("neumann", "both"):
            results["neumann"] = resolvent_kernel_neumann(a, lam, tol["neumann"])
        for name, res in results.items():
            err = abs(lam * res.g.values.sum() * grid.cell_volume - 1.0)
            bound = max(tol["mass"], lam * res.truncation_bound * grid.extent**grid.dim)
            rep.checks.append(check_upper(f"mass_identity[{name},lambda={_lam_tag(lam)}]", err, bound))
            sidecar = res.sidecar() | {"kernel": spec.to_dict(), "grid": cfg["grid"]}
            _emit_field(res.g, out, f"resolvent_{name}_lambda_{_lam_tag(lam)}", sidecar)
        if method == "both":
            gap = float(np.max(np.abs(results["neumann"].g.values - results["spectral"].g.values)))
            rep.checks.append(check_upper(f"cross_solver[lambda={_lam_tag(lam)}]", gap,
                                          tol["neumann"] + tol["cross_solver_slack"]))
        parts.append(rep)
    return _merge("resolvent", parts, list(cfg["lambdas"]))


def _potential(cfg: dict, grid: Grid) -> schrodinger.Potential:
    p = cfg["potential"]
    if p.get("profile", "box") == "tabulated":
        table = read_field_csv(_resolve(cfg, p["file"]), grid)
        return schrodinger.Potential(p["support_radius"], "tabulated", table=table)
    return schrodinger.Potential.box(p.get("height", 1.0), p["support_radius"])


def run_groundstate(cfg: dict, out: Path) -> Report:
    tol = cfg["tolerances"]
    grid = _grid(cfg)
    spec = _kernel(cfg, grid)
    a = sample_kernel(spec, grid)
    V = _potential(cfg, grid)
    gs = schrodinger.principal_eigenpair(a, V, tol["power_iteration"])
    rep = Report("groundstate")
    rep.data = {"groundstate": gs.sidecar(), "potential": V.to_dict()}
    _emit_field(gs.psi, out, "groundstate_psi", gs.sidecar() | {"kernel": spec.to_dict(), "grid": cfg["grid"]})
    if gs.edge_detected:
        rep.notices.append("principal eigenvalue at the edge of the essential spectrum: no ground state")
        rep.checks.append(Check("ground_state_exists", gs.lam, 0.0, False, informational=True))
        return rep
    rep.lambda_grid = [gs.lam]
    res = schrodinger.groundstate_residual(a, V, gs)
    rep.checks.append(check_upper("groundstate_representation_residual", res, tol["groundstate_residual"]))
    window = cfg.get("window")
    try:
        tail = schrodinger.groundstate_tail_report(gs, spec, window, support_radius=V.support_radius)
    except JumpgenError as exc:
        rep.notices.append(f"tail fit skipped: {exc}")
        return rep
    rep.window = list(tail.window)
    rep.data["tail"] = tail.to_dict()
    if tail.in_scope:
        rep.checks.extend(tail.checks)
    else:
        rep.notices.append(tail.note)
    return rep


def run_evolve(cfg: dict, out: Path) -> Report:
    tol = cfg["tolerances"]
    grid = _grid(cfg)
    spec = _kernel(cfg, grid)
    a = sample_kernel(spec, grid)
    m = float(cfg["m"])
    src = dict(cfg["source"])
    if src["kind"] == "file":
        src["path"] = str(_resolve(cfg, src["path"]))
    f = evolution.make_source(src, grid)
    ev = cfg["evolve"]
    u_hat = evolution.stationary_solution(a, m, f)
    trace = evolution.evolve_stepped(a, m, f, ev["t_end"], ev["dt"], ev.get("output_times"))
    trace.write(out / "trace")
    _emit_field(u_hat, out, "stationary", {"m": m, "kernel": spec.to_dict(), "grid": cfg["grid"]})
    _emit_field(trace.final, out, "terminal", {"t": trace.times[-1], "m": m, "dt": trace.dt})

    rep = evolution.comparison_report(trace, u_hat, envelope_slack=tol["envelope_slack"])
    exact = evolution.evolve_exact(a, m, f, trace.times[-1])
    gap = float(np.max(np.abs(trace.final.values - exact.values)))
    rep.checks.append(check_upper("stepped_vs_exact", gap,
                                  evolution.stepping_tolerance(m, trace.dt, f, trace.times[-1])))
    stat = apply_generator(a, u_hat).values - m * u_hat.values + f.values
    rep.checks.append(check_upper("stationarity_residual", float(np.max(np.abs(stat))), tol["stationarity"]))

    tc = tail_class(spec)
    if tc.kind == "polynomial" and src["kind"] in ("box", "polynomial"):
        alpha_eff = tc.alpha if src["kind"] == "box" else min(tc.alpha, float(src["alpha"]))
        fit = asymptotics.fit_polynomial_tail(u_hat, cfg.get("window"))
        target = grid.dim + alpha_eff
        rep.checks.append(check_upper("stationary_tail_exponent", abs(fit.exponent - target),
                                      tol["stationary_exponent"],
                                      note=f"fitted {fit.exponent:.4f}, expected {target:g}"))
        rep.window = list(fit.window)
        rep.data["stationary_tail"] = fit.to_dict()
    return rep


def run_mc(cfg: dict, out: Path) -> Report:
    tol = cfg["tolerances"]
    grid = _grid(cfg)
    spec = _kernel(cfg, grid)
    mc = cfg["mc"]
    config = mc_oracle.WalkConfig(spec, mc["seed"], mc["n_walks"], grid)
    config.require_verdict_size()
    backend = mc.get("backend")
    a = sample_kernel(spec, grid)
    parts = []
    for lam in cfg["lambdas"]:
        est = mc_oracle.estimate_resolvent_mc(spec, lam, config, backend=backend)
        est.write(out / f"mc_lambda_{_lam_tag(lam)}")
        write_plot_data(est.estimate, out / "plot_data" / f"mc_estimate_lambda_{_lam_tag(lam)}.csv")
        g = resolvent_kernel_spectral(a, lam).g
        rep = mc_oracle.agreement_report(
            est, g, radius=mc.get("agreement_radius", 3.0), n_sigma=tol["mc_sigmas"],
            min_fraction=tol["mc_fraction"], k_rel_tol=tol["mean_k"],
        )
        for c in rep.checks:
            c.name = f"{c.name}[lambda={_lam_tag(lam)}]"
        parts.append(rep)
    for tail in mc.get("walk_tails", []):
        parts.append(mc_oracle.walk_tail_report(spec, tail["n"], config, tail["radii"], backend=backend))
    return _merge("mc-oracle", parts, list(cfg["lambdas"]))


def run_verify(cfg: dict, out: Path) -> Report:
    tol = cfg["tolerances"]
    grid = _grid(cfg)
    spec = _kernel(cfg, grid)
    kind = tail_class(spec).kind
    if kind == "polynomial":
        return asymptotics.verify_polynomial_theorem(
            spec, cfg["lambdas"], grid, fit_window=cfg.get("window"), exponent_tol=tol["exponent"],
            slope_slack=tol["slope_slack"], spread_factor=tol["spread_factor"],
        )
    if kind == "exponential":
        return asymptotics.verify_exponential_theorem(
            spec, cfg["lambdas"], grid, window=cfg.get("window"), rate_tol=tol["rate"], slope_tol=tol["slope"],
        )
    raise UsageError(f"verify needs a polynomial or exponential kernel; {spec.family} is {kind}")


RUNNERS = {
    "resolvent": run_resolvent,
    "groundstate": run_groundstate,
    "evolve": run_evolve,
    "mc-oracle": run_mc,
    "verify": run_verify,
}


def run(cfg: dict) -> tuple[Report, Path]:
    out = Path(cfg.get("output_dir", DEFAULT_OUTPUT_DIR))
    out.mkdir(parents=True, exist_ok=True)
    report = RUNNERS[cfg["command"]](cfg, out)
    payload = report.to_dict()
    jsonschema.validate(payload, _schema("report.json"))
    _write_json(out / "report.json", payload)
    return report, out


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jumpgen", description="Numerical lab for nonlocal jump generators.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="experiment JSON file")
    p.add_argument("--lambda", dest="lam", type=float, help="run a single lambda instead of the config's list")
    p.add_argument("--seed", type=int, help="override mc.seed")
    p.add_argument("--out", help="override output_dir")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        if args.lam is not None:
            if not args.lam > 0:
                raise UsageError("--lambda must be positive")
            cfg["lambdas"] = [args.lam]
        if args.seed is not None:
            if "mc" not in cfg:
                raise UsageError("--seed given but the config has no mc section")
            if not 0 <= args.seed < 2**64:
                raise UsageError("--seed must be a 64-bit unsigned integer")
            cfg["mc"]["seed"] = args.seed
        if args.out is not None:
            cfg["output_dir"] = args.out
        report, out = run(cfg)
    except RuntimeError as exc:
        # non-convergence and failed self-checks are verdicts, not usage errors
        print(f"jumpgen: {type(exc).__name__}: {exc}", file=sys.stderr)
        print(f"failed checks: {type(exc).__name__}", file=sys.stderr)
        return 1
    except (UsageError, JumpgenError, ValueError) as exc:
        print(f"jumpgen: error: {exc}", file=sys.stderr)
        return 2

    for c in report.checks:
        print(c.line())
    for note in report.notices:
        print(f"notice: {note}")
    print(f"report: {out / 'report.json'}")
    if not report.passed:
        print("failed checks: " + ", ".join(report.failures()), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
