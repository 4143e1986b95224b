"""Command-line batch runner.

Subcommands::

    nullconv run <target> [--pipeline NAME] [--config FILE] [overrides...]
    nullconv validate --config FILE
    nullconv list-examples

``target`` is an example id or ``oracle-check``.  Reports go to
``<output_dir>/<target>-<pipeline>.csv`` and ``.json``; the environment
variable ``NULLCONV_OUTPUT_DIR`` overrides the configured directory.

Exit codes: 0 success, 2 when a checked invariant fails, 1 on usage errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .examples import EXAMPLE_IDS
from . import experiments as ex
from .manifold import ring_radii
from .nulldist import MAX_SPACETIME_VERTICES
from .swif import SwifRow

PIPELINES = ("gh-to-limit", "uniform", "swif", "holder", "lower-bound", "oracle-check")
OUTPUT_ENV = "NULLCONV_OUTPUT_DIR"

DEFAULTS = {
    "pipeline": None,
    "js": None,
    "level": 2,
    "n_vertices": 40,
    "n_times": 5,
    "lambda": 0.05,
    "kappa": 100.0,
    "alpha": 0.5,
    "spline_lambda": 2.0,
    "metric": "flat",
    "n_levels": 129,
    "oracle_level": 1,
    "oracle_j": 10.0,
    "output_dir": "reports",
}
KNOWN_KEYS = set(DEFAULTS) | {"seed", "example"}

DESCRIPTIONS = {
    "ex31-space-collapse": "spatial factor 1/j on a boundary band; limit collapses boundary circles",
    "ex32-time-blowup": "lapse j on a boundary band; same reduced metric as ex31",
    "ex33-bubble": "factor j on r <= 1/j; limit has a unit bubble attached at the centre",
    "ex34-spline": "logarithmic spline near the centre; flat in the intrinsic-flat sense only",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nullconv", description="Null-distance convergence experiments")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="execute a pipeline and write CSV + JSON reports")
    run.add_argument("target", help="example id or 'oracle-check'")
    run.add_argument("--config", type=Path)
    run.add_argument("--pipeline", choices=PIPELINES)
    run.add_argument("--seed", type=int)
    run.add_argument("--js", type=lambda s: [float(x) for x in s.split(",")], help="comma-separated j ladder")
    run.add_argument("--level", type=int)
    run.add_argument("--n-vertices", dest="n_vertices", type=int)
    run.add_argument("--n-times", dest="n_times", type=int)
    run.add_argument("--lambda", dest="lambda", type=float)
    run.add_argument("--kappa", type=float)
    run.add_argument("--alpha", type=float)
    run.add_argument("--spline-lambda", dest="spline_lambda", type=float)
    run.add_argument("--metric")
    run.add_argument("--n-levels", dest="n_levels", type=int)
    run.add_argument("--output-dir", dest="output_dir")

    val = sub.add_parser("validate", help="check a configuration without running it")
    val.add_argument("--config", type=Path, required=True)

    sub.add_parser("list-examples", help="print the known example ids")
    return p


def load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    return doc


def _estimate_vertices(level: int) -> int:
    return 1 + len(ring_radii(level)) * 8 * 2 ** level


def validate(config: dict) -> list[str]:
    """Schema and range diagnostics; empty when the config is runnable."""
    diags = []
    for key in sorted(set(config) - KNOWN_KEYS):
        diags.append(f"unknown key {key!r}")
    seed = config.get("seed")
    if seed is None:
        diags.append("missing seed (required for reproducible sampling)")
    elif not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        diags.append("seed must be a nonnegative integer")
    example = config.get("example")
    if example is not None and example not in EXAMPLE_IDS and example != "oracle-check":
        diags.append(f"unknown example id {example!r}; known: {', '.join(EXAMPLE_IDS)}")
    pipeline = config.get("pipeline")
    if pipeline is not None and pipeline not in PIPELINES:
        diags.append(f"unknown pipeline {pipeline!r}; known: {', '.join(PIPELINES)}")
    cfg = {**DEFAULTS, **config}
    if not cfg["spline_lambda"] > 1:
        diags.append("spline_lambda must exceed 1: the spline family needs a cap radius j**-lambda below 1/j")
    if not cfg["lambda"] > 0:
        diags.append("lambda must be positive")
    if not cfg["kappa"] > 1:
        diags.append("kappa must exceed 1")
    if not 0 < cfg["alpha"] <= 1:
        diags.append("alpha must lie in (0, 1]")
    for key in ("level", "oracle_level"):
        if not isinstance(cfg[key], int) or not 0 <= cfg[key] <= 6:
            diags.append(f"{key} must be an integer in [0, 6]")
    for key in ("n_vertices", "n_times", "n_levels"):
        if not isinstance(cfg[key], int) or cfg[key] < 2:
            diags.append(f"{key} must be an integer >= 2")
    if cfg["js"] is not None:
        if not isinstance(cfg["js"], list) or not cfg["js"] or not all(isinstance(j, (int, float)) and j >= 2 for j in cfg["js"]):
            diags.append("js must be a nonempty list of numbers >= 2")
    if cfg["metric"] != "flat" and cfg["metric"] not in EXAMPLE_IDS:
        diags.append(f"metric must be 'flat' or an example id, got {cfg['metric']!r}")
    if not diags and (example == "oracle-check" or pipeline == "oracle-check"):
        n = _estimate_vertices(cfg["oracle_level"]) * cfg["n_levels"]
        if n > MAX_SPACETIME_VERTICES:
            diags.append(f"oracle grid would have about {n} spacetime vertices (cap {MAX_SPACETIME_VERTICES})")
    return diags


def _merge(args: argparse.Namespace) -> dict:
    config = load_config(args.config)
    config["example"] = args.target
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            config[key] = val
    if args.seed is not None:
        config["seed"] = args.seed
    if config.get("pipeline") is None:
        config["pipeline"] = "oracle-check" if args.target == "oracle-check" else "gh-to-limit"
    return config


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def execute(config: dict) -> tuple[dict, str]:
    """Run the configured pipeline; returns the JSON record and the CSV table."""
    cfg = {**DEFAULTS, **config}
    target, pipeline, seed = cfg["example"], cfg["pipeline"], int(cfg["seed"])
    checks = []
    if pipeline == "oracle-check":
        metric = cfg["metric"] if target == "oracle-check" else target
        res = ex.oracle_check(metric, j=cfg["oracle_j"], level=cfg["oracle_level"], n_levels=cfg["n_levels"], seed=seed)
        rows = [ex.row_dict(res)]
        checks.append({"name": "formula within tolerance of oracle", "passed": res.passed,
                       "tolerance": res.tolerance})
        print(f"max |formula - oracle| = {res.max_abs_error:.6g} (cell {res.cell:.6g}); "
              f"worst excess over tolerance {res.worst_excess:.6g}")
        columns = list(rows[0])
    else:
        if target not in EXAMPLE_IDS:
            raise UsageError(f"unknown example id {target!r}; known: {', '.join(EXAMPLE_IDS)}")
        js = cfg["js"] or list(ex.DEFAULT_LADDERS[target])
        common = dict(level=cfg["level"], seed=seed, spline_lambda=cfg["spline_lambda"])
        if pipeline in ("gh-to-limit", "uniform"):
            out = ex.gh_to_limit(target, js, n_vertices=cfg["n_vertices"], n_times=cfg["n_times"], **common)
            if target == "ex34-spline":
                checks.append({"name": "GH bound to the flat slab stays >= 0.02",
                               "passed": all(r.gh_uniform_to_flat >= 0.02 for r in out),
                               "tolerance": ex.TOLERANCE_RULES["none"]})
            else:
                checks.append({"name": "correspondence bound to the limit decreases",
                               "passed": _strictly_decreasing([r.gh_to_limit for r in out]),
                               "tolerance": ex.TOLERANCE_RULES["trend"]})
        elif pipeline == "swif":
            out = ex.swif_table(target, js, lam=cfg["lambda"], kappa=cfg["kappa"],
                                n_vertices=max(cfg["n_vertices"], 300), **common)
            if target == "ex34-spline":
                checks.append({"name": "flat bound decreases", "passed": _strictly_decreasing([r.bound for r in out]),
                               "tolerance": ex.TOLERANCE_RULES["trend"]})
            checks.append({"name": "bound at or above its floor",
                           "passed": all(r.bound >= r.floor * (1 - 1e-12) for r in out),
                           "tolerance": ex.TOLERANCE_RULES["none"]})
        elif pipeline == "holder":
            out = ex.holder_table(target, js, alpha=cfg["alpha"], n_vertices=cfg["n_vertices"],
                                  n_times=cfg["n_times"], **common)
            checks.append({"name": "slab constant within max(C, |dt|^(1-alpha))",
                           "passed": all(r.null_constant <= r.slab_bound + 1e-9 for r in out),
                           "tolerance": "1e-9 absolute"})
        elif pipeline == "lower-bound":
            out = ex.lower_bound_table(js, family=target, level=cfg["level"], n_vertices=cfg["n_vertices"],
                                       n_times=cfg["n_times"], seed=seed)
            # examples break the lower-bound hypothesis; they are reported, not asserted
        else:
            raise UsageError(f"unknown pipeline {pipeline!r}")
        rows = [ex.row_dict(r) for r in out]
        if pipeline == "swif":
            columns = list(SwifRow.CSV_COLUMNS)
            table = [r.csv_values() for r in out]
        else:
            columns = list(rows[0])
            table = [list(r.values()) for r in rows]
        record = {"config": cfg, "rows": rows, "checks": checks}
        return record, _to_csv(columns, table)
    record = {"config": cfg, "rows": rows, "checks": checks}
    return record, _to_csv(columns, [list(r.values()) for r in rows])


def _json_default(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _clean(o):
    if isinstance(o, float) and not math.isfinite(o):
        return None if math.isnan(o) else ("inf" if o > 0 else "-inf")
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def cmd_run(args) -> int:
    config = _merge(args)
    diags = validate(config)
    if diags:
        for d in diags:
            print(f"config: {d}", file=sys.stderr)
        return 1
    try:
        record, table = execute(config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MemoryError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(os.environ.get(OUTPUT_ENV) or config.get("output_dir") or DEFAULTS["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{config['example']}-{config['pipeline']}"
    (out_dir / f"{stem}.csv").write_text(table)
    (out_dir / f"{stem}.json").write_text(json.dumps(_clean(record), indent=2, sort_keys=True,
                                                     default=_json_default) + "\n")
    failed = [c for c in record["checks"] if not c["passed"]]
    for c in record["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  [{c['tolerance']}]")
    print(f"wrote {out_dir / (stem + '.csv')}")
    return 2 if failed else 0


def cmd_validate(args) -> int:
    try:
        config = load_config(args.config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    diags = validate(config)
    for d in diags:
        print(d)
    if not diags:
        print("ok")
    return 0


def cmd_list(args) -> int:
    for eid in EXAMPLE_IDS:
        print(f"{eid}\t{DESCRIPTIONS[eid]}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"run": cmd_run, "validate": cmd_validate, "list-examples": cmd_list}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
