"""Command-line harness: ``inandout {schedule, sample, verify-1d, compare}``.

Exit codes: 0 success, 1 I/O error, 2 configuration error, 3 sampler
failure (a chain failed and ``--restart`` was not given), 4 tolerance or
diagnostics error.

Config files are INI-style (``[body]``, ``[run]``, ``[params]`` sections of
``key = value`` lines); every key can be overridden by the matching flag.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .baselines import (BallWalkParams, default_speedy_delta, run_ball_walk,
                        run_speedy_walk)
from .diagnostics import effective_sample_size, json_report, run_report
from .errors import DiagnosticsError, InOutError, ParameterError, ToleranceError
from .geometry import ConvexBody, parse_body
from .oracle1d import run_oracle_suite
from .sampler import InOutParams, make_rng, run_chain, run_with_restart
from .theory import (conditioning_bias, fi_constants, iteration_count, main_step_size,
                     per_iteration_schedule, point_start_warmness)

logger = logging.getLogger("inandout")

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_FAILURE, EXIT_TOLERANCE = 0, 1, 2, 3, 4
WALKS = ("inout", "ball", "speedy")


class ChainFailure(InOutError):
    """A chain exhausted its trial cap and restarts were off."""


def schedule_report(m: int, M: float, eta: float, eps: float, q: float, d: int,
                    cov_opnorm: Optional[float] = None, D: Optional[float] = None) -> dict:
    """Everything the ``schedule`` subcommand prints, as a plain dict."""
    if not 0 < eta < 1:
        raise ParameterError("eta must lie in (0, 1)")
    s = per_iteration_schedule(m, M, eta, d)
    out = {
        "inputs": {"m": m, "M": M, "eta": eta, "eps": eps, "q": q, "d": d,
                   "cov_opnorm": cov_opnorm, "D": D},
        "schedule": s.to_dict(),
        "main_step_size": main_step_size(m, M, eta, d),
        "conditioning_bias": conditioning_bias(q, eta) if q > 1 else None,
    }
    if cov_opnorm is not None:
        out["iteration_count"] = iteration_count(q, d, cov_opnorm, M, eta, eps)
    if cov_opnorm is not None and D is not None:
        out["fi_constants"] = fi_constants(cov_opnorm, D, d)
    if D is not None:
        out["point_start_log_warmness"] = point_start_warmness(d, s.h, D)
    return out


def _body_from_args(spec: str, d: Optional[int]) -> ConvexBody:
    # "box" plus --d is shorthand for "box(d)"
    if "(" not in spec:
        if d is None:
            raise ParameterError(f"body {spec!r} needs --d")
        spec = f"{spec}({d})"
    return parse_body(spec)


@dataclass
class ExperimentConfig:
    body: str
    walk: str = "inout"
    d: Optional[int] = None
    m: int = 10
    M: float = 1.0
    eta: float = 0.1
    eps: float = 0.1
    q: float = 2.0
    h: Optional[float] = None
    N: Optional[int] = None
    delta: Optional[float] = None
    chains: int = 1
    seed: int = 0
    restart: bool = False
    start: str = "uniform"
    checkpoints: List[int] = field(default_factory=list)
    out: str = "out"
    points: bool = True

    def validate(self):
        if self.walk not in WALKS:
            raise ParameterError(f"walk must be one of {WALKS}")
        if self.chains < 1:
            raise ParameterError("chains must be >= 1")
        if self.m < 1:
            raise ParameterError("m must be >= 1")
        if self.checkpoints != sorted(self.checkpoints) or any(
                c < 0 or c > self.m for c in self.checkpoints):
            raise ParameterError("checkpoints must be sorted and within [0, m]")
        if self.start not in ("uniform", "center"):
            raise ParameterError("start must be 'uniform' or 'center'")
        return self

    def to_dict(self):
        return asdict(self)


_CONFIG_KEYS = {
    "body": {"spec": ("body", str), "d": ("d", int)},
    "run": {"walk": ("walk", str), "chains": ("chains", int), "seed": ("seed", int),
            "m": ("m", int), "restart": ("restart", "bool"), "start": ("start", str),
            "checkpoints": ("checkpoints", "list"), "out": ("out", str),
            "points": ("points", "bool")},
    "params": {"M": ("M", float), "eta": ("eta", float), "eps": ("eps", float),
               "q": ("q", float), "h": ("h", float), "N": ("N", int), "delta": ("delta", float)},
}


def read_config(path) -> dict:
    """Flatten an INI file into ``ExperimentConfig`` keyword arguments."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    with open(path) as fh:
        cp.read_file(fh)
    out = {}
    for section in cp.sections():
        keys = _CONFIG_KEYS.get(section)
        if keys is None:
            raise ParameterError(f"unknown config section [{section}]")
        for k, raw in cp[section].items():
            if k not in keys:
                raise ParameterError(f"unknown key {k!r} in [{section}]")
            name, typ = keys[k]
            try:
                if typ == "bool":
                    val = cp[section].getboolean(k)
                elif typ == "list":
                    val = [int(v) for v in raw.replace(",", " ").split()]
                else:
                    val = typ(raw)
            except ValueError as exc:
                raise ParameterError(f"bad value for {k!r}: {raw!r}") from exc
            out[name] = val
    return out


def build_config(args, config_path=None) -> ExperimentConfig:
    vals = read_config(config_path) if config_path else {}
    for name in ("body", "walk", "d", "m", "M", "eta", "eps", "q", "h", "N", "delta",
                 "chains", "seed", "start", "out"):
        v = getattr(args, name, None)
        if v is not None:
            vals[name] = v
    if getattr(args, "restart", False):
        vals["restart"] = True
    if getattr(args, "no_points", False):
        vals["points"] = False
    if getattr(args, "checkpoints", None):
        vals["checkpoints"] = [int(c) for c in args.checkpoints.split(",")]
    if "body" not in vals:
        raise ParameterError("no body given (use --body or a [body] spec)")
    return ExperimentConfig(**vals).validate()


def _inout_params(cfg: ExperimentConfig, d: int) -> InOutParams:
    s = per_iteration_schedule(cfg.m, cfg.M, cfg.eta, d)
    return InOutParams(h=cfg.h if cfg.h is not None else s.h,
                       N=cfg.N if cfg.N is not None else s.N,
                       m=cfg.m, q=cfg.q, eps=cfg.eps, eta=cfg.eta, M=cfg.M, seed=cfg.seed)


def run_experiment(cfg: ExperimentConfig):
    """Run all chains of ``cfg``; return ``(body, traces, schedule_dict)``.

    Chain ``c`` draws everything from ``make_rng(cfg.seed, c)``.
    """
    body = _body_from_args(cfg.body, cfg.d)
    traces = []
    schedule = None
    if cfg.walk == "inout":
        params = _inout_params(cfg, body.d)
        schedule = per_iteration_schedule(cfg.m, cfg.M, cfg.eta, body.d).to_dict()
        schedule.update({"h_used": params.h, "N_used": params.N})
    else:
        delta = cfg.delta if cfg.delta is not None else default_speedy_delta(body.d)
        bparams = BallWalkParams(delta=delta, T=cfg.m, seed=cfg.seed)
        schedule = {"delta": delta, "T": cfg.m}

    def start(rng):
        if cfg.start == "center":
            return body.center.copy()
        return body.sample_uniform(rng)

    for c in range(cfg.chains):
        rng = make_rng(cfg.seed, c)
        if cfg.walk == "inout":
            if cfg.restart:
                _, tr = run_with_restart(body, start, params, rng, store_iterates=True)
            else:
                tr = run_chain(body, start(rng), params, rng)
        elif cfg.walk == "ball":
            tr = run_ball_walk(body, start(rng), bparams, rng)
        else:
            tr = run_speedy_walk(body, start(rng), bparams, rng)
        traces.append(tr)
    return body, traces, schedule


def write_trace_csv(path, traces, checkpoints=(), points=True):
    """Columns ``chain, iter, trials, cum_queries[, x1..xd]``; iteration 0 is the start."""
    keep = set(checkpoints) if checkpoints else None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        d = len(traces[0].iterates[0])
        header = ["chain", "iter", "trials", "cum_queries"]
        if points:
            header += [f"x{i + 1}" for i in range(d)]
        w.writerow(header)
        for c, tr in enumerate(traces):
            cum = 0
            for i, x in enumerate(tr.iterates):
                trials = tr.trials_per_iter[i - 1] if i else 0
                cum += trials
                if keep is not None and i not in keep:
                    continue
                row = [c, i, trials, cum]
                if points:
                    row += [repr(float(v)) for v in x]
                w.writerow(row)


def cmd_schedule(args) -> int:
    rep = schedule_report(args.m, args.M, args.eta, args.eps, args.q, args.d,
                          args.cov_opnorm, args.D)
    print(json.dumps(rep, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = build_config(args, args.config)
    body, traces, schedule = run_experiment(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(out / "trace.csv", traces, cfg.checkpoints, cfg.points)
    rep = run_report(traces)
    summary = {
        "walk": cfg.walk,
        "proper_steps": rep.proper_steps,
        "total_queries": rep.total_queries,
        "mean_trials": rep.mean_trials_per_iter,
        "failure_rate": rep.failure_rate,
        "restarts": rep.restarts,
        "report": json_report(cfg.to_dict(), schedule, rep.bounds, []),
        "run": rep.to_dict(),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
    failed = sum(t.failed for t in traces)
    if failed:
        raise ChainFailure(f"{failed} of {len(traces)} chains failed; rerun with --restart")
    print(json.dumps({k: summary[k] for k in ("walk", "proper_steps", "total_queries",
                                              "failure_rate", "restarts")}, sort_keys=True))
    return EXIT_OK


def cmd_verify_1d(args) -> int:
    t0 = time.perf_counter()
    checks = run_oracle_suite(tol_scale=args.tol_scale)
    ok = all(c["pass"] for c in checks)
    rep = {"checks": checks, "pass": ok, "seconds": round(time.perf_counter() - t0, 3)}
    text = json.dumps(rep, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK if ok else EXIT_TOLERANCE


def compare_row(cfg: ExperimentConfig) -> dict:
    """Queries per effective sample, with ESS of the first coordinate summed over chains."""
    body, traces, _ = run_experiment(cfg)
    ess = sum(effective_sample_size(np.asarray(t.iterates)[1:, 0]) for t in traces)
    q = sum(t.total_queries for t in traces)
    return {"walk": cfg.walk, "body": cfg.body, "d": body.d, "chains": cfg.chains, "m": cfg.m,
            "total_queries": q, "ess": ess,
            "queries_per_effective_sample": q / ess if ess > 0 else math.inf}


def cmd_compare(args) -> int:
    if not args.configs:
        raise ParameterError("compare needs at least one config file")
    rows = [compare_row(build_config(argparse.Namespace(seed=args.seed), p))
            for p in args.configs]
    table = {"rows": rows}
    text = json.dumps(table, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    for r in rows:
        print(f"{r['walk']:>7} {r['body']:<16} queries/ESS = {r['queries_per_effective_sample']:.4g}",
              file=sys.stderr)
    return EXIT_OK


def _add_run_flags(p):
    p.add_argument("--config", help="INI config file; flags override it")
    p.add_argument("--body", help="body spec, e.g. 'box(5)' or 'box' with --d")
    p.add_argument("--walk", choices=WALKS)
    p.add_argument("--d", type=int, help="dimension for a bare body name")
    p.add_argument("--m", type=int, help="iterations (proper steps for ball/speedy)")
    p.add_argument("--M", type=float, help="warmness of the start")
    p.add_argument("--eta", type=float, help="total failure budget")
    p.add_argument("--eps", type=float, help="target accuracy")
    p.add_argument("--q", type=float, help="Renyi order")
    p.add_argument("--h", type=float, help="override the step variance")
    p.add_argument("--N", type=int, help="override the trial cap")
    p.add_argument("--delta", type=float, help="ball radius for ball/speedy walks")
    p.add_argument("--chains", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--start", choices=("uniform", "center"))
    p.add_argument("--checkpoints", help="comma-separated iterations to record")
    p.add_argument("--restart", action="store_true", help="rerun failed chains from scratch")
    p.add_argument("--no-points", action="store_true", help="omit coordinates from the CSV")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="inandout", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schedule", help="print the per-iteration schedule and bounds as JSON")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--M", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--cov-opnorm", type=float, dest="cov_opnorm")
    p.add_argument("--D", type=float, help="outer radius")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("sample", help="run chains, write trace.csv and summary.json")
    _add_run_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("verify-1d", help="run the exact 1-d oracle suite")
    p.add_argument("--tol-scale", type=float, default=1.0, dest="tol_scale",
                   help="multiply every tolerance (below 1 tightens)")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_verify_1d)

    p = sub.add_parser("compare", help="queries per effective sample across configs")
    p.add_argument("configs", nargs="*")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ChainFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ToleranceError, DiagnosticsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
