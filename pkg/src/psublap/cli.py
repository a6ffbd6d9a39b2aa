"""Command line entry point.

    psublap run <config>
    psublap verify [--samples N] [--seed S] [--k1-scale F]

Config files are flat ``key = value`` text; list values are comma
separated and ``#`` starts a comment.  The output directory from the
config is overridden by the PSUBLAP_OUTPUT_DIR environment variable.

Exit codes: 0 ok, 1 failed assertion, 2 parse error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import barriers as bar
from .geometry import Grid, parse_group
from .harness import (
    ExperimentConfig,
    ScenarioResult,
    identity_convergence,
    lemma_sweep,
    normalize_scenario,
    run_scenario,
)

log = logging.getLogger("psublap")

EXIT_OK, EXIT_ASSERTION, EXIT_PARSE, EXIT_INVARIANT = 0, 1, 2, 3
OUTPUT_ENV = "PSUBLAP_OUTPUT_DIR"
TRACE_HEADER = ("t", "sup_norm", "energy_y", "dt")
PROFILE_SLICES = 11


class ConfigError(ValueError):
    def __init__(self, key: str | None, message: str):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


_LIST_KEYS = {"q", "r", "s"}
_ALIASES = {"q_list": "q", "r_list": "r", "s_list": "s", "nodes": "n"}


def _convert(key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if key in _LIST_KEYS:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r}") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse key=value text into an ExperimentConfig."""
    kinds = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip().lower()
        key = _ALIASES.get(key, key)
        if not sep or not key:
            raise ConfigError(key or None, f"line {lineno} is not of the form key = value")
        if key not in kinds:
            raise ConfigError(key, f"unknown key on line {lineno}")
        if key in values:
            raise ConfigError(key, f"duplicate key on line {lineno}")
        kind = {"int": int, "float": float}.get(kinds[key], str)
        values[key] = _convert(key, raw, kind)
    scenario = values.pop("scenario", None)
    if scenario is None:
        raise ConfigError("scenario", "missing")
    try:
        scenario = normalize_scenario(str(scenario))
    except KeyError as exc:
        raise ConfigError("scenario", str(exc.args[0])) from None
    if "group" in values:
        try:
            parse_group(str(values["group"]))
        except ValueError as exc:
            raise ConfigError("group", str(exc)) from None
    return ExperimentConfig.for_scenario(scenario, **values)


# ---------------------------------------------------------------------------
# Output


def output_dir(cfg: ExperimentConfig) -> Path:
    root = os.environ.get(OUTPUT_ENV) or cfg.output_dir
    return Path(root) / cfg.scenario


def write_trace(path: Path, result: ScenarioResult) -> None:
    arrays = result.trace.as_arrays()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for row in zip(*(arrays[k] for k in TRACE_HEADER)):
            w.writerow([repr(float(v)) for v in row])


def write_profiles(path: Path, result: ScenarioResult) -> None:
    """u along the first horizontal axis through the box centre at evenly spaced samples."""
    trace, grid = result.trace, result.grid
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t", "x1", "u"))
        if not trace.fields:
            return
        picks = np.unique(np.linspace(0, len(trace.fields) - 1, PROFILE_SLICES).round().astype(int))
        idx = tuple([slice(None)] + [n // 2 for n in grid.extents[1:]])
        x = grid.axis(0)
        for k in picks:
            t = trace.times[k]
            for xi, ui in zip(x, trace.fields[k][idx]):
                w.writerow((repr(float(t)), repr(float(xi)), repr(float(ui))))


def summary_json(result: ScenarioResult) -> str:
    doc = result.to_dict()
    doc["artifacts"] = {"trace": "trace.csv", "profiles": "profiles.csv"}
    return json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"{type(obj).__name__} is not serializable")


def write_outputs(result: ScenarioResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if result.trace is not None:
        write_trace(out / "trace.csv", result)
        write_profiles(out / "profiles.csv", result)
    (out / "summary.json").write_text(summary_json(result))


# ---------------------------------------------------------------------------
# Commands


def cmd_run(config_path: str) -> int:
    try:
        text = Path(config_path).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        result = run_scenario(cfg)
    except ValueError as exc:
        # ProblemError and RegimeError included
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    out = output_dir(cfg)
    write_outputs(result, out)
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}")
    print(f"{result.scenario}: outcome={result.outcome} bound={result.bound} "
          f"blowup_time={result.blowup_time} -> {out}")
    return EXIT_OK if result.passed else EXIT_ASSERTION


@dataclasses.dataclass
class VerifyRow:
    name: str
    passed: bool
    detail: str
    worst: str = ""


def verification_suite(samples: int | None = None, seed: int = 0, k1_scale: float = 1.0) -> list[VerifyRow]:
    rows = []
    sweep = lemma_sweep(seed=seed)
    rows.append(VerifyRow("lemma sweep", sweep.passed,
                          f"min gap {sweep.min_gap:.3g}, sigma=2 rel err {sweep.equality_max_rel_error:.1e}",
                          json.dumps(sweep.worst)))
    for g in ("euclidean:2", "heisenberg"):
        for ident in ("gradient", "divergence"):
            for b in (0.5, 1.5, 3.0):
                c = identity_convergence(g, ident, b)
                rows.append(VerifyRow(f"{ident} identity {g} b={b:g}", c.passed,
                                      "exact" if c.exact else f"order {c.order:.3f}",
                                      f"errors {['%.2e' % e for e in c.errors]}"))

    group = parse_group("euclidean:2")
    grid = Grid.box(2, 33)
    geo = bar.barrier_geometry(group, grid)
    args = (group.N1, geo.R_prime, geo.eps, 1.0, geo.x0)
    v1 = bar.recipe_v1(2.0, 3.0, 1.5, *args)
    barriers = [
        dataclasses.replace(v1, K=v1.K * k1_scale),
        bar.recipe_v2(2.0, 1.0, 2.0, *args),
        bar.recipe_v3(2.0, 2.0, *args),
        bar.recipe_v4(2.0, (3.0,), (2.0,), *args),
    ]
    n_bar = 256 if samples is None else samples
    for b in barriers:
        cert = bar.certify_barrier(b, n_bar)
        rows.append(_cert_row(cert))
    n_prof = 64 if samples is None else samples
    for kw in ({"r": 1.5}, {"s": 1.5}):
        prof = bar.blowup_profile(2.0, 3.0, N1=2, **kw)
        rows.append(_cert_row(bar.certify_profile(prof, n_prof)))
    return rows


def _cert_row(cert: bar.Certificate) -> VerifyRow:
    detail = f"min {cert.min:.4g} max {cert.max:.4g} ({cert.expected_sign}, {cert.samples} samples/axis)"
    if cert.low_resolution:
        detail += " LOW-RESOLUTION"
    where = ", ".join(f"{v:.6g}" for v in cert.worst_location)
    return VerifyRow(cert.name, cert.passed, detail, f"worst {cert.worst_value:.6g} at ({where})")


def cmd_verify(samples: int | None, seed: int, k1_scale: float) -> int:
    if samples is not None and samples < 2:
        print("error: --samples must be at least 2", file=sys.stderr)
        return EXIT_PARSE
    rows = verification_suite(samples, seed, k1_scale)
    width = max(len(r.name) for r in rows)
    for r in rows:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
        if not r.passed and r.worst:
            print(f"      {r.worst}")
    failed = sum(not r.passed for r in rows)
    print(f"{len(rows) - failed}/{len(rows)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_ASSERTION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="psublap", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario from a key=value config")
    run.add_argument("config")
    ver = sub.add_parser("verify", help="run the closed-form and convergence checks")
    ver.add_argument("--samples", type=int, default=None, help="samples per axis for sign certificates")
    ver.add_argument("--seed", type=int, default=0, help="seed for the randomised inequality sweep")
    ver.add_argument("--k1-scale", type=float, default=1.0, help="multiply the V1 constant (fault injection)")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        return cmd_run(args.config)
    return cmd_verify(args.samples, args.seed, args.k1_scale)


if __name__ == "__main__":
    sys.exit(main())
