"""``hyfc`` command line: generate, train, predict, evaluate, sweep.

Stage-wise use::

    hyfc generate --system lorenz --out run/            # run/trajectory.csv + run/task.json
    hyfc train --method hybrid --dr 500 --epsilon 0.05 --trajectory run/trajectory.csv --out run/
    hyfc predict --model run/model_hybrid.npz --trajectory run/trajectory.csv --out run/
    hyfc evaluate run/trials.csv
    hyfc sweep --config sweep.yaml --jobs 4

Exit codes: 0 success, 1 sweep finished with an empty cell, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import ConfigError, parse_config
from .dynamics import Trajectory
from .evaluation import (
    EvalConfig,
    ForecastTask,
    _records,
    read_trials_csv,
    score_hybrid,
    score_knowledge,
    score_reservoir,
    summarize_groups,
    valid_time,
    write_summary_csv,
    write_trials_csv,
)
from .experiment import _collect, _knowledge_iter, derive_seed, make_task, run_sweep
from .hybrid import (
    HybridConfig,
    iter_hybrid,
    load_hybrid_artifact,
    resynchronize_hybrid,
    save_hybrid_artifact,
    train_hybrid,
)
from .knowledge import KnowledgeModel
from .reservoir import iter_closed_loop, load_artifact, resynchronize, save_artifact, train_reservoir

log = logging.getLogger("hyfc")

# flag name -> ExperimentConfig field
FLAG_FIELDS = {
    "system": "system", "dr": "D_r", "epsilon": "epsilon", "rho": "rho", "sigma": "sigma",
    "avg_degree": "avg_degree", "gamma": "gamma", "beta": "beta", "train_time": "train_time",
    "tau": "tau", "xi": "xi", "f": "f", "realizations": "realizations",
    "intervals": "intervals", "seed": "seed", "jobs": "jobs", "out": "out",
}


def _common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("experiment configuration (overrides --config)")
    g.add_argument("--config", type=Path, help="YAML config file")
    g.add_argument("--system", choices=["lorenz", "ks"])
    g.add_argument("--dr", type=int, nargs="+", metavar="D_R", help="reservoir size(s)")
    g.add_argument("--epsilon", type=float, nargs="+", help="model error(s)")
    g.add_argument("--rho", type=float)
    g.add_argument("--sigma", type=float)
    g.add_argument("--avg-degree", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--train-time", type=float)
    g.add_argument("--tau", type=float)
    g.add_argument("--xi", type=float)
    g.add_argument("--f", type=float)
    g.add_argument("--realizations", type=int)
    g.add_argument("--intervals", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", type=int)
    g.add_argument("--out", type=str)
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hyfc", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write the true run and its task layout")
    _common(g)

    t = sub.add_parser("train", help="train a reservoir or hybrid model on a trajectory")
    _common(t)
    t.add_argument("--method", choices=["reservoir", "hybrid"], default="hybrid")
    t.add_argument("--trajectory", type=Path, required=True)
    t.add_argument("--realization", type=int, default=0,
                   help="realization index fed into the seed derivation")

    pr = sub.add_parser("predict", help="resync a stored model and forecast every interval")
    _common(pr)
    pr.add_argument("--model", type=Path, help="model artifact (.npz); omit for --method knowledge")
    pr.add_argument("--method", choices=["knowledge"], help="forecast with the model alone")
    pr.add_argument("--trajectory", type=Path, required=True)

    e = sub.add_parser("evaluate", help="valid time of an error series, or summary of trials.csv")
    _common(e)
    e.add_argument("input", type=Path, help="trials CSV or error-series file (one E per line)")
    e.add_argument("--dt", type=float, help="sample interval of the error series")

    s = sub.add_parser("sweep", help="full trial protocol over methods x D_r x epsilon")
    _common(s)
    s.add_argument("--methods", nargs="+", choices=["knowledge", "reservoir", "hybrid"])
    s.add_argument("--no-plots", action="store_true")
    return p


def config_from_args(args):
    overrides = {FLAG_FIELDS[k]: v for k, v in vars(args).items() if k in FLAG_FIELDS}
    if getattr(args, "methods", None):
        overrides["methods"] = args.methods
    return parse_config(args.config, overrides)


def _out(config) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# Task files


def write_task(task: ForecastTask, out: Path) -> None:
    task.truth.to_csv(out / "trajectory.csv")
    meta = {"train_end": task.train_end, "eval": asdict(task.eval), "denom": task.denom}
    (out / "task.json").write_text(json.dumps(meta, indent=2) + "\n")


def read_task(trajectory: Path, config) -> ForecastTask:
    if not trajectory.exists():
        raise FileNotFoundError(f"trajectory file {trajectory} does not exist (run `hyfc generate`)")
    truth = Trajectory.from_csv(trajectory)
    task_file = trajectory.with_name("task.json")
    if task_file.exists():
        meta = json.loads(task_file.read_text())
        return ForecastTask(truth, meta["train_end"], EvalConfig(**meta["eval"]))
    # bare trajectory: train on the head, intervals as configured
    ev = config.eval_config()
    n_block = int(round(ev.block / truth.dt))
    train_end = len(truth) - 1 - n_block * ev.intervals
    if train_end < 1:
        raise ValueError(f"{trajectory}: too short for {ev.intervals} intervals")
    return ForecastTask(truth, train_end, ev)


# --------------------------------------------------------------------------
# Commands


def cmd_generate(args) -> int:
    config = config_from_args(args)
    task = make_task(config)
    out = _out(config)
    write_task(task, out)
    print(f"wrote {out / 'trajectory.csv'} ({len(task.truth)} samples, training ends at "
          f"sample {task.train_end})")
    return 0


def cmd_train(args) -> int:
    config = config_from_args(args)
    task = read_task(args.trajectory, config)
    D_r, eps = config.D_r[0], config.epsilon[0]
    if args.method == "reservoir":
        eps = 0.0
    seed = derive_seed(config.seed, args.method, D_r, eps, args.realization)
    rc = config.reservoir_config(D_r, seed)
    out = _out(config)
    path = out / f"model_{args.method}.npz"
    extra = dict(signal_scale=task.denom, master_seed=config.seed, realization=args.realization)
    if args.method == "reservoir":
        net, readout = train_reservoir(rc, task.training)
        save_artifact(path, net, readout, **extra)
    else:
        hc = HybridConfig(rc, config.gamma, KnowledgeModel(config.system, eps))
        net, readout = train_hybrid(hc, task.training)
        save_hybrid_artifact(path, net, readout, hc, **extra)
    print(f"wrote {path} (D_r={D_r}, seed={seed})")
    return 0


def cmd_predict(args) -> int:
    config = config_from_args(args)
    task = read_task(args.trajectory, config)
    xi = config.xi
    lam = task.eval.lambda_max
    t0 = int(task.starts[0])
    n = task.steps(task.eval.tau)
    recent = task.truth.samples[t0 - task.steps(xi) + 1: t0 + 1]
    if args.model is None:
        if args.method != "knowledge":
            raise ValueError("predict needs --model, or --method knowledge")
        model = KnowledgeModel(config.system, config.epsilon[0])
        tv, cens = score_knowledge(task, model)
        seed = derive_seed(config.seed, "knowledge", 0, model.epsilon, 0)
        rows = _records("knowledge", 0, model.epsilon, seed, tv, cens, lam)
        forecast = _collect(_knowledge_iter(model, task.truth.samples[t0]), n, task.truth.dim)
    else:
        if not args.model.exists():
            raise FileNotFoundError(f"model artifact {args.model} does not exist (run `hyfc train`)")
        header, net, readout = load_artifact(args.model)
        seed = header["seed"]
        if header["kind"] == "hybrid":
            hc, net, readout = load_hybrid_artifact(args.model)
            tv, cens = score_hybrid(task, net, readout, hc.model, xi)
            rows = _records("hybrid", net.D_r, hc.model.epsilon, seed, tv, cens, lam)
            if xi > 0:
                resynchronize_hybrid(net, hc.model, recent)
            forecast = _collect(iter_hybrid(net, hc.model, readout), n, task.truth.dim)
        else:
            tv, cens = score_reservoir(task, net, readout, xi)
            rows = _records("reservoir", net.D_r, 0.0, seed, tv, cens, lam)
            if xi > 0:
                resynchronize(net, recent)
            forecast = _collect(iter_closed_loop(net, readout), n, task.truth.dim)
    out = _out(config)
    write_trials_csv(rows, out / "trials.csv")
    summaries = summarize_groups(rows)
    write_summary_csv(summaries, out / "summary.csv")
    fc = Trajectory(forecast, task.dt, (t0 + 1) * task.dt, task.truth.system)
    fc.to_csv(out / "forecast.csv")
    for (m, d, e), s in summaries.items():
        print(f"{m} D_r={d} epsilon={e:g}: median {s.median:.3f} (q1 {s.q1:.3f}, q3 {s.q3:.3f}) "
              f"Lyapunov times over {s.count} intervals")
    return 0


def _read_error_series(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if rows and rows[0][0].strip().lower() in ("e", "error"):
        rows = rows[1:]
    try:
        return np.array([float(r[0]) for r in rows])
    except ValueError as exc:
        raise ValueError(f"{path}: not an error series ({exc})") from None


def cmd_evaluate(args) -> int:
    config = config_from_args(args)
    if not args.input.exists():
        raise FileNotFoundError(f"{args.input} does not exist")
    with open(args.input) as fh:
        head = fh.readline()
    if "t_v" in head and "method" in head:
        trials = read_trials_csv(args.input)
        summaries = summarize_groups(trials)
        out = _out(config)
        write_summary_csv(summaries, out / "summary.csv")
        for (m, d, e), s in summaries.items():
            print(f"{m},{d},{e!r},{s.count},{s.median!r},{s.q1!r},{s.q3!r},{s.n_censored}")
        return 0
    E = _read_error_series(args.input)
    dt = args.dt if args.dt is not None else config.dt
    tv, censored = valid_time(E, config.f, dt)
    lam = config.eval_config().lambda_max
    print(json.dumps({"t_v": tv, "t_v_lyapunov": tv * lam, "censored": censored, "f": config.f,
                      "dt": dt}))
    return 0


def cmd_sweep(args) -> int:
    config = config_from_args(args)
    result = run_sweep(config, plots=not args.no_plots)
    summaries = summarize_groups(result.trials)
    for (m, d, e), s in summaries.items():
        print(f"{m:9s} D_r={d:<5d} eps={e:<6g} median {s.median:7.3f}  "
              f"[{s.q1:.3f}, {s.q3:.3f}]  n={s.count}")
    print(f"results in {result.out}")
    if result.empty_cells:
        print(f"error: sweep cells with no valid trials: {result.empty_cells}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "predict": cmd_predict,
            "evaluate": cmd_evaluate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"hyfc {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
