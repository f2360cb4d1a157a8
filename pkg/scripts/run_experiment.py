"""Full two-phase experiment on the 47-bus surrogate.

Synthesizes a day of data, trains the policy with the stock
configuration (Adam, lr 1e-3, batch 30, 40 epochs, 48/32/16 hidden),
then evaluates the deterministic policy on the held-out tail of the day
against the per-interval convex baseline, reporting the mean loss gap,
feasibility rate, and the inference/baseline latency ratio.

Takes a few minutes; the baseline sweep dominates.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np
from scipy import stats

from voltcraft import policy
from voltcraft.baseline import SolverOptions, solve_baseline
from voltcraft.data import SynthesisProfile, load_timeseries, synthesize_timeseries
from voltcraft.network import load_network
from voltcraft.powerflow import evaluate_loss
from voltcraft.trainer import TrainConfig, infer, run_training

DEFAULT_FEEDER = str(
    Path(__file__).resolve().parent.parent
    / "src" / "voltcraft" / "feeders" / "surrogate47.json"
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--network", default=DEFAULT_FEEDER)
    ap.add_argument("--data", help="time-series CSV; synthesized when omitted")
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--train-seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--model-out", help="save the trained model here")
    ap.add_argument("--trace-out", help="save the loss trace CSV here")
    args = ap.parse_args()

    model_net = load_network(args.network)
    if args.data:
        ds = load_timeseries(args.data, model_net)
    else:
        ds = synthesize_timeseries(model_net, SynthesisProfile(), seed=args.data_seed)
    print(f"data: {len(ds.train_idx)} train / {len(ds.test_idx)} test intervals")

    config = TrainConfig(epochs=args.epochs, seed=args.train_seed)
    t0 = time.perf_counter()
    trained, trace, manifest = run_training(model_net, ds.train_states, config)
    t_train = time.perf_counter() - t0
    ra = np.array(trace.running_avg)
    rho, p = stats.spearmanr(np.arange(len(ra)), ra)
    print(f"training: {manifest['updates']} updates in {t_train:.0f} s, "
          f"running-average loss {ra[min(200, len(ra)) - 1]:.3g} -> {ra[-1]:.3g}, "
          f"Spearman rho {rho:.3f} (p {p:.1e})")

    if args.model_out:
        policy.save(trained, args.model_out)
        print(f"model: {args.model_out}")
    if args.trace_out:
        import csv
        with open(args.trace_out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "raw_loss", "running_avg", "feasible"])
            for row in trace.rows():
                w.writerow([row["step"], "%.17g" % row["raw_loss"],
                            "%.17g" % row["running_avg"], int(row["feasible"])])
        print(f"trace: {args.trace_out}")

    opts = SolverOptions()
    inf_losses, opt_losses, lat_inf, lat_base = [], [], [], []
    feasible = 0
    t0 = time.perf_counter()
    for s in ds.test_states:
        ta = time.perf_counter()
        q = infer(trained, model_net, s, mode="deterministic")
        lat_inf.append(time.perf_counter() - ta)
        ev = evaluate_loss(model_net, s, q)
        tb = time.perf_counter()
        sol = solve_baseline(model_net, s, opts)
        lat_base.append(time.perf_counter() - tb)
        inf_losses.append(ev.objective)
        opt_losses.append(sol.objective)
        feasible += ev.feasible
    t_eval = time.perf_counter() - t0

    mi, mo = np.mean(inf_losses), np.mean(opt_losses)
    n = len(inf_losses)
    print(f"held-out sweep: {n} intervals in {t_eval:.0f} s")
    print(f"mean loss: learned {model_net.pu_to_kw(mi):.3f} kW vs "
          f"optimal {model_net.pu_to_kw(mo):.3f} kW  "
          f"(relative gap {(mi - mo) / mo * 100:.2f}%)")
    print(f"feasible: {feasible}/{n} ({feasible / n * 100:.2f}%)")
    print(f"median latency: infer {np.median(lat_inf) * 1e3:.3f} ms, "
          f"baseline {np.median(lat_base) * 1e3:.1f} ms, "
          f"ratio {np.median(lat_inf) / np.median(lat_base):.4f}")


if __name__ == "__main__":
    main()
