"""Command-line front end.

Subcommands mirror the two-phase workflow: feeder validation and power
flow for sanity checks, per-interval convex baseline, policy training,
inference, paired comparison, and a latency benchmark. Any library error
surfaces as a one-line JSON record on stderr with a nonzero exit, so
shell pipelines can branch on structured output instead of scraping text.

`VOLTCRAFT_SEED` overrides the run seed of `train` and `infer` when set.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, fields

import numpy as np

from . import policy
from .baseline import SolverOptions, solve_baseline, solution_row, trace_header
from .data import load_timeseries
from .errors import ParseError, VoltcraftError
from .network import load_network
from .powerflow import evaluate_loss, solve_power_flow
from .trainer import TrainConfig, infer, run_training

_G = "%.17g"


def _fail(exc: Exception) -> int:
    record = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record), file=sys.stderr)
    return 1


def _env_seed():
    raw = os.environ.get("VOLTCRAFT_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"VOLTCRAFT_SEED must be an integer, got {raw!r}") from None


def _load_states(args, model):
    ds = load_timeseries(args.data, model, power_factor=args.power_factor)
    if args.split == "train":
        idx = list(ds.train_idx)
    elif args.split == "test":
        idx = list(ds.test_idx)
    else:
        idx = list(range(len(ds)))
    if args.limit is not None:
        idx = idx[: args.limit]
    return ds, idx


def cmd_validate(args) -> int:
    model = load_network(args.network)
    lo, hi = np.sqrt(model.v_min[0]), np.sqrt(model.v_max[0])
    print(f"feeder: {args.network}")
    print(f"buses: {model.n + 1} (including substation)")
    print(f"base: {model.base_mva} MVA, {model.base_kv} kV")
    print(f"voltage band: [{lo:g}, {hi:g}] pu")
    print(f"inverters: {model.n_inverters}")
    for inv in model.inverters:
        print(
            f"  bus {model.labels[inv.bus]}: "
            f"p_rated {model.pu_to_kw(inv.p_rated):.0f} kW, "
            f"q range +/-{model.pu_to_kw(inv.q_max):.1f} kvar"
        )
    print("ok")
    return 0


def cmd_pf(args) -> int:
    model = load_network(args.network)
    with open(args.state) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{args.state}: not valid JSON ({exc})") from exc
    try:
        p = np.asarray(doc["p"], dtype=float)
        q_c = np.asarray(doc["q_c"], dtype=float)
        q_g = np.asarray(doc.get("q_g", np.zeros(model.n_inverters)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{args.state}: missing or malformed field ({exc})") from exc
    q = -q_c
    q[model.inverter_buses - 1] += q_g
    sol = solve_power_flow(model, p, q)
    print(f"converged: {sol.converged} in {sol.iterations} iterations")
    print(f"max residual: {sol.max_residual:.3e}")
    print(f"loss: {model.pu_to_kw(sol.loss):.6f} kW")
    print(f"min |V|: {np.sqrt(sol.v.min()):.6f} pu at bus "
          f"{model.labels[int(np.argmin(sol.v))]}")
    print(f"max |V|: {np.sqrt(sol.v.max()):.6f} pu")
    print("bus P_pu Q_pu ell_pu v_pu")
    for i in range(model.n):
        print(f"{model.labels[i + 1]} {sol.P[i]:.10f} {sol.Q[i]:.10f} "
              f"{sol.ell[i]:.3e} {sol.v[i + 1]:.10f}")
    return 0


def cmd_baseline(args) -> int:
    model = load_network(args.network)
    ds, idx = _load_states(args, model)
    opts = SolverOptions()
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(trace_header(model))
        for i in idx:
            sol = solve_baseline(model, ds.intervals[i], opts)
            writer.writerow(solution_row(ds.intervals[i].timestamp, sol))
    print(f"wrote {len(idx)} rows to {args.out}")
    return 0


def _read_train_config(path):
    """Accept either bare TrainConfig fields or a full training manifest
    (fields under 'config', layer widths under 'hidden')."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if "config" in doc and isinstance(doc["config"], dict):
        cfg_doc = doc["config"]
        hidden = doc.get("hidden")
    else:
        cfg_doc = dict(doc)
        hidden = cfg_doc.pop("hidden", None)
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(cfg_doc) - known
    if unknown:
        raise ParseError(f"{path}: unknown config fields {sorted(unknown)}")
    try:
        config = TrainConfig(**cfg_doc)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return config, tuple(hidden) if hidden is not None else (48, 32, 16)


def cmd_train(args) -> int:
    model = load_network(args.network)
    ds, idx = _load_states(args, model)
    states = [ds.intervals[i] for i in idx]
    if args.config:
        config, hidden = _read_train_config(args.config)
    else:
        config, hidden = TrainConfig(), (48, 32, 16)
    env = _env_seed()
    if env is not None:
        config = TrainConfig(**{**asdict(config), "seed": env})
    trained, trace, manifest = run_training(model, states, config, hidden=hidden)
    policy.save(trained, args.out)
    manifest_path = args.manifest or args.out + ".manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["step", "raw_loss", "running_avg", "baseline_opt_loss", "feasible"]
            )
            for row in trace.rows():
                writer.writerow([
                    row["step"],
                    _G % row["raw_loss"],
                    _G % row["running_avg"],
                    "" if row["baseline_opt_loss"] is None else _G % row["baseline_opt_loss"],
                    int(row["feasible"]),
                ])
    print(f"trained on {len(states)} intervals, {manifest['updates']} updates")
    print(f"model: {args.out}")
    print(f"manifest: {manifest_path}")
    return 0


def cmd_infer(args) -> int:
    model_net = load_network(args.network)
    pol = policy.load(args.model)
    ds, idx = _load_states(args, model_net)
    mode = "deterministic" if args.deterministic else "sample"
    env = _env_seed()
    seed = env if env is not None else args.seed
    rng = np.random.default_rng(seed)
    labels = [model_net.labels[b] for b in model_net.inverter_buses]
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["timestamp"]
            + [f"{lab}_qg_kvar" for lab in labels]
            + ["loss_kw", "violation_pu", "feasible"]
        )
        for i in idx:
            s = ds.intervals[i]
            q = infer(pol, model_net, s, mode=mode, rng=rng)
            ev = evaluate_loss(model_net, s, q)
            writer.writerow(
                [_G % s.timestamp]
                + [_G % v for v in model_net.pu_to_kw(q)]
                + [_G % model_net.pu_to_kw(ev.objective),
                   _G % ev.violation,
                   int(ev.feasible)]
            )
    print(f"wrote {len(idx)} rows to {args.out}")
    return 0


def cmd_compare(args) -> int:
    model_net = load_network(args.network)
    pol = policy.load(args.model)
    ds, idx = _load_states(args, model_net)
    opts = SolverOptions()
    gaps = []
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "learned_loss", "optimal_loss", "gap"])
        for i in idx:
            s = ds.intervals[i]
            q = infer(pol, model_net, s, mode="deterministic")
            learned = evaluate_loss(model_net, s, q).objective
            optimal = solve_baseline(model_net, s, opts).objective
            gap = learned - optimal
            gaps.append(gap)
            writer.writerow([
                _G % s.timestamp, _G % learned, _G % optimal, _G % gap,
            ])
    print(f"wrote {len(idx)} rows to {args.out}")
    print(f"mean gap: {np.mean(gaps):.6e} pu ({model_net.pu_to_kw(np.mean(gaps)):.3f} kW)")
    return 0


def cmd_bench(args) -> int:
    model_net = load_network(args.network)
    pol = policy.load(args.model)
    ds, idx = _load_states(args, model_net)
    opts = SolverOptions()
    t_inf, t_base = [], []
    for i in idx:
        s = ds.intervals[i]
        t0 = time.perf_counter()
        infer(pol, model_net, s, mode="deterministic")
        t_inf.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        solve_baseline(model_net, s, opts)
        t_base.append(time.perf_counter() - t0)
    t_inf, t_base = np.array(t_inf), np.array(t_base)
    med_i, med_b = np.median(t_inf), np.median(t_base)
    print(f"intervals: {len(idx)}")
    print("phase      median_ms      p95_ms")
    print(f"infer      {med_i * 1e3:9.3f}  {np.percentile(t_inf, 95) * 1e3:10.3f}")
    print(f"baseline   {med_b * 1e3:9.3f}  {np.percentile(t_base, 95) * 1e3:10.3f}")
    print(f"median ratio (infer/baseline): {med_i / med_b:.4f}")
    return 0


def _add_data_flags(sub, with_limit=True):
    sub.add_argument("--data", required=True, help="time-series CSV")
    sub.add_argument("--power-factor", type=float, default=0.8)
    sub.add_argument("--split", choices=["train", "test", "all"], default="all")
    if with_limit:
        sub.add_argument("--limit", type=int, default=None,
                         help="use at most this many intervals")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voltcraft",
        description="Reactive power control on radial feeders: convex "
        "baseline and learned policy.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("validate", help="check a feeder file")
    sub.add_argument("--network", required=True)
    sub.set_defaults(fn=cmd_validate)

    sub = subs.add_parser("pf", help="solve one power flow")
    sub.add_argument("--network", required=True)
    sub.add_argument("--state", required=True, help="JSON with p, q_c, optional q_g")
    sub.set_defaults(fn=cmd_pf)

    sub = subs.add_parser("baseline", help="per-interval convex optimum")
    sub.add_argument("--network", required=True)
    _add_data_flags(sub)
    sub.add_argument("--out", required=True)
    sub.set_defaults(fn=cmd_baseline)

    sub = subs.add_parser("train", help="fit the policy on the training split")
    sub.add_argument("--network", required=True)
    _add_data_flags(sub, with_limit=False)
    sub.add_argument("--config", help="JSON config or a previous manifest")
    sub.add_argument("--out", required=True, help="model file")
    sub.add_argument("--trace", help="loss trace CSV")
    sub.add_argument("--manifest", help="manifest path (default <out>.manifest.json)")
    sub.set_defaults(fn=cmd_train, split="train", limit=None)

    sub = subs.add_parser("infer", help="run the policy over intervals")
    sub.add_argument("--model", required=True)
    sub.add_argument("--network", required=True)
    _add_data_flags(sub)
    sub.add_argument("--deterministic", action="store_true")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.set_defaults(fn=cmd_infer)

    sub = subs.add_parser("compare", help="learned loss vs baseline optimum")
    sub.add_argument("--model", required=True)
    sub.add_argument("--network", required=True)
    _add_data_flags(sub)
    sub.add_argument("--out", required=True)
    sub.set_defaults(fn=cmd_compare)

    sub = subs.add_parser("bench", help="latency of inference vs baseline")
    sub.add_argument("--model", required=True)
    sub.add_argument("--network", required=True)
    _add_data_flags(sub)
    sub.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (VoltcraftError, FileNotFoundError, OSError) as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
