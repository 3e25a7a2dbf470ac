"""Command-line front end.

    otmap solve SRC.csv TGT.csv [--out DIR]
    otmap rates --config CFG [--seed S] [--out DIR] [--threads N]
    otmap stability [--config CFG] [--seed S]
    otmap barycenter SRC.csv TGT.csv [--out DIR]
    otmap indep --config CFG [--seed S] [--out DIR]
    otmap kernel-check --s 1

Point clouds are CSV files with one atom per row, columns x1..xd and an
optional trailing ``weight`` column (a header row is optional).  Exit code 0
means success, 1 a usage/input error, 2 a failed acceptance threshold.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from otmap.ot_core import DiscreteMeasure, solve_ot

EXIT_OK, EXIT_INPUT, EXIT_THRESHOLD = 0, 1, 2


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# point clouds
# ---------------------------------------------------------------------------


def _is_header(cells) -> bool:
    names = [c.lower() for c in cells]
    coords = [c for c in names if c != "weight"]
    return bool(coords) and names.count("weight") <= (names[-1] == "weight") and all(
        c.startswith("x") and c[1:].isdigit() for c in coords
    )


def read_cloud(path) -> DiscreteMeasure:
    """Parse a point-cloud CSV; errors name the offending line."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    rows, weighted, width = [], None, None  # weighted stays None until a header is seen
    for lineno, rec in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not rec or all(not c.strip() for c in rec) or rec[0].lstrip().startswith("#"):
            continue
        cells = [c.strip() for c in rec]
        if not rows and weighted is None and _is_header(cells):
            weighted = cells[-1].lower() == "weight"
            width = len(cells)
            continue
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric value in row {','.join(cells)!r}") from None
        if width is None:
            width = len(vals)
        if len(vals) != width:
            raise InputError(f"{path}:{lineno}: expected {width} columns, found {len(vals)}")
        if not all(np.isfinite(vals)):
            raise InputError(f"{path}:{lineno}: non-finite value")
        rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    arr = np.array(rows)
    if weighted:
        pts, w = arr[:, :-1], arr[:, -1]
        if np.any(w <= 0):
            bad = int(np.argmax(w <= 0))
            raise InputError(f"{path}: weight in data row {bad + 1} is not positive")
        return DiscreteMeasure.normalized(pts, w)
    return DiscreteMeasure.uniform(arr)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


# ---------------------------------------------------------------------------
# configs
# ---------------------------------------------------------------------------

_MEASURE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["low", "high"],
    "properties": {
        "low": {"type": "array", "items": {"type": "number"}},
        "high": {"type": "array", "items": {"type": "number"}},
        "family": {"enum": ["uniform", "truncnorm"]},
        "loc": {"type": ["array", "null"], "items": {"type": "number"}},
        "scale": {"type": ["array", "null"], "items": {"type": "number"}},
    },
}
_PROBLEM = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "dim"],
    "properties": {
        "kind": {"enum": ["linear", "separable"]},
        "dim": {"type": "integer", "minimum": 1},
        "A": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "b": {"type": "array", "items": {"type": "number"}},
        "maps": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name"],
                "properties": {"name": {"enum": ["identity", "affine", "cubic", "tanh"]}, "params": {"type": "object"}},
            },
        },
        "support": _MEASURE,
    },
}
SCHEMAS = {
    "rates": {
        "type": "object",
        "additionalProperties": False,
        "required": ["problem", "n_grid", "reps", "seed"],
        "properties": {
            "problem": _PROBLEM,
            "estimator": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "kind": {"enum": ["discrete-discrete", "semi-discrete", "kernel-smoothed-discretized", "wavelet-smoothed-discretized"]},
                    "s": {"type": "integer", "minimum": 0},
                    "bandwidth_scale": {"type": "number", "exclusiveMinimum": 0},
                    "M": {"type": "integer", "minimum": 1},
                },
            },
            "n_grid": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
            "reps": {"type": "integer", "minimum": 1},
            "seed": {"type": "integer", "minimum": 0},
            "M_max": {"type": "integer", "minimum": 1},
            "slope_tolerance": {"type": "number", "minimum": 0},
        },
    },
    "stability": {
        "type": "object",
        "additionalProperties": False,
        "required": ["problems", "trials", "seed"],
        "properties": {
            "problems": {"type": "array", "items": _PROBLEM, "minItems": 1},
            "sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            "trials": {"type": "integer", "minimum": 1},
            "seed": {"type": "integer", "minimum": 0},
        },
    },
    "indep": {
        "type": "object",
        "additionalProperties": False,
        "required": ["data", "dx"],
        "properties": {
            "data": {"type": "string"},
            "dx": {"type": "integer", "minimum": 1},
            "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "null_draws": {"type": "integer", "minimum": 200},
            "null_seed": {"type": "integer", "minimum": 0},
            "seed": {"type": "integer", "minimum": 0},
        },
    },
}


def load_config(spec: str | None, command: str) -> dict:
    """Read and validate a JSON config; a bare name selects a shipped config."""
    if spec is None:
        spec = {"stability": "stability_default"}.get(command)
        if spec is None:
            raise InputError(f"{command} needs --config")
    path = Path(spec)
    if path.exists():
        text, origin = path.read_text(), str(path)
    else:
        shipped = resources.files("otmap") / "configs" / f"{Path(spec).stem}.json"
        if not shipped.is_file():
            raise InputError(f"config {spec!r} not found (shipped: {', '.join(shipped_configs())})")
        text, origin = shipped.read_text(), f"shipped:{shipped.name}"
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{origin}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    validator = jsonschema.Draft202012Validator(SCHEMAS[command])
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{origin}: {len(errors)} config error(s)"]
        for e in errors:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"  {where}: {e.message}")
        raise InputError("\n".join(lines))
    if "data" in cfg and not Path(cfg["data"]).is_absolute() and path.exists():
        cfg["data"] = str(path.parent / cfg["data"])
    return cfg


def shipped_configs() -> list[str]:
    root = resources.files("otmap") / "configs"
    return sorted(p.name.removesuffix(".json") for p in root.iterdir() if p.name.endswith(".json"))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args) -> int:
    src, tgt = read_cloud(args.source), read_cloud(args.target)
    if src.dim != tgt.dim:
        raise InputError(f"dimension mismatch: {args.source} is {src.dim}-d, {args.target} is {tgt.dim}-d")
    plan = solve_ot(src, tgt)
    print(f"cost {plan.cost!r}")
    out = _out_dir(args)
    plan_rows = [(int(i), int(j), float(w)) for i, j, w in plan.entries]
    if out is None:
        print("i,j,mass")
        for i, j, w in plan_rows:
            print(f"{i},{j},{w!r}")
        return EXIT_OK
    _write_csv(out / "plan.csv", ["i", "j", "mass"], plan_rows)
    psi, psi_star = plan.duals.psi, plan.duals.psi_star
    pot_rows = [("source", i, v) for i, v in enumerate(psi)] + [("target", j, v) for j, v in enumerate(psi_star)]
    _write_csv(out / "potentials.csv", ["side", "index", "value"], pot_rows)
    (out / "cost.json").write_text(json.dumps({"cost": plan.cost}) + "\n")
    return EXIT_OK


def cmd_rates(args) -> int:
    from otmap.experiments import report_from_config, write_report

    cfg = load_config(args.config, "rates")
    report = report_from_config(cfg, seed=args.seed, threads=args.threads)
    out = _out_dir(args)
    if out is not None:
        write_report(report, out)
    summary = report.summary()
    print(json.dumps(summary, indent=2, sort_keys=True))
    tol = cfg.get("slope_tolerance")
    if tol is not None:
        if report.fitted_slope is None or abs(report.fitted_slope - report.theoretical_exponent) > tol:
            print(f"slope check FAILED (tolerance {tol})", file=sys.stderr)
            return EXIT_THRESHOLD
    return EXIT_OK


def cmd_stability(args) -> int:
    from otmap.baryproj import stability_report
    from otmap.synthetic import problem_from_dict, sample_pair

    cfg = load_config(args.config, "stability")
    seed = cfg["seed"] if args.seed is None else args.seed
    problems = [problem_from_dict(p) for p in cfg["problems"]]
    sizes = cfg.get("sizes", [50])
    held = 0
    rows = []
    children = np.random.SeedSequence(seed).spawn(cfg["trials"])
    for t, child in enumerate(children):
        problem = problems[t % len(problems)]
        m = sizes[t % len(sizes)]
        n = sizes[(t // len(sizes)) % len(sizes)]
        src, tgt = sample_pair(problem, m, n, child)
        rep = stability_report(src, tgt, problem)
        held += rep.holds
        rows.append((t, problem.kind, problem.dim, m, n, rep.lhs, rep.rhs_max_term, rep.rhs_phi_term, int(rep.holds)))
    out = _out_dir(args)
    if out is not None:
        _write_csv(out / "stability.csv", ["trial", "kind", "dim", "m", "n", "lhs", "rhs_max_term", "rhs_phi_term", "holds"], rows)
    print(f"{held}/{len(rows)} hold")
    return EXIT_OK if held == len(rows) else EXIT_THRESHOLD


def cmd_barycenter(args) -> int:
    from otmap.applications import plugin_barycenter

    src, tgt = read_cloud(args.source), read_cloud(args.target)
    if src.dim != tgt.dim:
        raise InputError(f"dimension mismatch: {src.dim}-d vs {tgt.dim}-d")
    est = plugin_barycenter(src, tgt)
    header = [f"x{k + 1}" for k in range(src.dim)] + ["weight"]
    rows = [list(a) + [w] for a, w in zip(est.atoms, est.weights)]
    out = _out_dir(args)
    if out is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    else:
        _write_csv(out / "barycenter.csv", header, rows)
    return EXIT_OK


def cmd_indep(args) -> int:
    from otmap.applications import indep_test

    cfg = load_config(args.config, "indep")
    cloud = read_cloud(cfg["data"])
    dx = cfg["dx"]
    if not 0 < dx < cloud.dim:
        raise InputError(f"dx={dx} must split the {cloud.dim} data columns into two non-empty blocks")
    x, y = cloud.points[:, :dx], cloud.points[:, dx:]
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    res = indep_test((x, y), cfg.get("alpha", 0.05), cfg, seed)
    text = res.to_json()
    out = _out_dir(args)
    if out is not None:
        (out / "indep.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_kernel_check(args) -> int:
    from otmap.smoothing import hermite_kernel, kernel_moments

    k = hermite_kernel(args.s)
    top = 2 * args.s + 2
    mom = kernel_moments(k, top + 1)
    absmom = kernel_moments(k, top, absolute=True)
    ok = abs(mom[0] - 1) < 1e-6 and all(abs(v) < 1e-6 for v in mom[1 : top])
    print(f"kernel order {k.order} (s={args.s}), support radius {k.support_radius:.4f}, int|K| = {k.abs_mass:.6f}")
    print(f"{'j':>3} {'int u^j K':>22} {'int |u|^j |K|':>18}")
    for j in range(top + 2):
        absval = f"{absmom[j]:18.10f}" if j <= top else f"{'':>18}"
        print(f"{j:>3} {mom[j]:22.3e} {absval}")
    print("moment check", "passed" if ok else "FAILED")
    return EXIT_OK if ok else EXIT_THRESHOLD


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file, or the name of a shipped config")
    common.add_argument("--seed", type=int, help="64-bit seed overriding the config")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker processes (wall time only)")

    p = argparse.ArgumentParser(prog="otmap", description="Plug-in optimal transport map estimation.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="exact OT between two point clouds")
    s.add_argument("source")
    s.add_argument("target")
    s.set_defaults(func=cmd_solve)
    s = sub.add_parser("rates", parents=[common], help="Monte-Carlo rate experiment")
    s.set_defaults(func=cmd_rates)
    s = sub.add_parser("stability", parents=[common], help="check the stability bound on seeded instances")
    s.set_defaults(func=cmd_stability)
    s = sub.add_parser("barycenter", parents=[common], help="plug-in barycenter of two point clouds")
    s.add_argument("source")
    s.add_argument("target")
    s.set_defaults(func=cmd_barycenter)
    s = sub.add_parser("indep", parents=[common], help="OT-rank HSIC independence test")
    s.set_defaults(func=cmd_indep)
    s = sub.add_parser("kernel-check", parents=[common], help="moment table of the Hermite kernel")
    s.add_argument("--s", type=int, default=1, help="smoothness; kernel order is 2s+2")
    s.set_defaults(func=cmd_kernel_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INPUT
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
