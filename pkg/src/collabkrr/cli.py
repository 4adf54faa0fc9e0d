"""Command-line experiment driver.

    collabkrr gen     --config cfg.json --out runs/a
    collabkrr train   --config cfg.json --out runs/a [--oracle]
    collabkrr check   --config cfg.json --out runs/a
    collabkrr oracle  --config cfg.json --out runs/a
    collabkrr compare --config cfg.json --out runs/a

Every command after ``gen`` reads ``<out>/dataset.json`` when it exists (or
the file given by ``--data``) and otherwise regenerates the dataset from the
config.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .connectivity import is_connected
from .ensemble import load_dataset, save_dataset
from .errors import InputError, NumericalError, StoreError
from .experiment import ExperimentConfig, TelemetryWriter, load_config, load_model, model_to_dict, save_model
from .kernels import eval_expansion_many
from .oracle import solve_centralized, solve_relaxed
from .trainer import train

log = logging.getLogger("collabkrr")


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset(cfg: ExperimentConfig, args):
    path = Path(args.data) if args.data else Path(cfg.output.dir) / "dataset.json"
    if path.exists():
        training, ensemble = load_dataset(path)
        log.info("loaded %s (n=%d, m=%d)", path, training.n, ensemble.m)
        return training, ensemble, False
    if args.data:
        raise InputError(f"--data: no such file {path}")
    training = cfg.build_data()
    return training, cfg.build_ensemble(training), True


def _lambdas(cfg: ExperimentConfig, m: int) -> list[float]:
    if cfg.train.lambdas is not None and len(cfg.train.lambdas) != m:
        raise InputError(f"train.lambdas has {len(cfg.train.lambdas)} entries but the dataset has {m} agents")
    return cfg.train.resolve_lambdas(m)


def cmd_gen(cfg: ExperimentConfig, args) -> int:
    training = cfg.build_data()
    ensemble = cfg.build_ensemble(training)
    path = _out_dir(cfg) / "dataset.json"
    save_dataset(path, training, ensemble)
    print(f"wrote {path} (n={training.n}, d={training.d}, m={ensemble.m}, "
          f"covered={len(ensemble.covered())}/{training.n})")
    return 0


def cmd_train(cfg: ExperimentConfig, args) -> int:
    training, ensemble, _ = _dataset(cfg, args)
    kernel = cfg.kernel.build()
    lambdas = _lambdas(cfg, ensemble.m)
    config = cfg.train.build(ensemble.m)
    out = _out_dir(cfg)
    reference = None
    if args.oracle:
        reference = solve_relaxed(training, ensemble, kernel, lambdas).as_product_point()
    with TelemetryWriter(out / "telemetry.csv") as tw:
        state = train(training, ensemble, kernel, config, reference=reference,
                      on_cycle=lambda s: tw.write(s.history[-1]))
    save_model(out / "model.json", state.functions, kernel, lambdas)
    last = state.history[-1]
    print(f"cycles: {state.cycle}, converged: {str(state.converged).lower()}, step_sq: {last.step_sq:.3e}")
    print(f"wrote {out / 'telemetry.csv'} and {out / 'model.json'}")
    return 0


def cmd_check(cfg: ExperimentConfig, args) -> int:
    training, ensemble, _ = _dataset(cfg, args)
    connected, graph = is_connected(ensemble, training, cfg.kernel.build())
    path = _out_dir(cfg) / "edges.txt"
    graph.write(path)
    print(f"connected: {str(connected).lower()}, components: {len(graph.components)}")
    print(f"wrote {path}")
    return 0


def cmd_oracle(cfg: ExperimentConfig, args) -> int:
    training, ensemble, _ = _dataset(cfg, args)
    kernel = cfg.kernel.build()
    lambdas = _lambdas(cfg, ensemble.m)
    total = float(sum(lambdas))
    central = solve_centralized(training, kernel, total)
    relaxed = solve_relaxed(training, ensemble, kernel, lambdas)
    doc = {
        "centralized": {"lambda": total, **model_to_dict([central], kernel, [total])},
        "relaxed": {
            **model_to_dict(relaxed.f_stars, kernel, lambdas),
            "z_star": relaxed.z_star.tolist(),
            "kkt_residual": relaxed.kkt_residual,
        },
    }
    path = _out_dir(cfg) / "oracle.json"
    path.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"centralized lambda: {total:g}, relaxed kkt_residual: {relaxed.kkt_residual:.3e}")
    print(f"wrote {path}")
    return 0


def compare_report(training, functions, kernel, lambdas, target=None) -> dict:
    X = training.points
    central = solve_centralized(training, kernel, float(sum(lambdas)))
    f_c = eval_expansion_many(central, X, X)
    eta = target(X) if target is not None else None
    agents = []
    for i, f in enumerate(functions):
        vals = eval_expansion_many(f, X, X)
        row = {
            "agent": i + 1,
            "max_gap_to_centralized": float(np.max(np.abs(vals - f_c))),
            "mse_labels": float(np.mean((vals - training.labels) ** 2)),
        }
        if eta is not None:
            row["mse_target"] = float(np.mean((vals - eta) ** 2))
        agents.append(row)
    report = {"lambda": float(sum(lambdas)), "agents": agents,
              "centralized_mse_labels": float(np.mean((f_c - training.labels) ** 2))}
    if eta is not None:
        report["centralized_mse_target"] = float(np.mean((f_c - eta) ** 2))
    return report


def _config_reproduces(cfg: ExperimentConfig, training) -> bool:
    if (cfg.data.n, cfg.data.d) != (training.n, training.d):
        return False
    fresh = cfg.build_data()
    return np.array_equal(fresh.points, training.points) and np.array_equal(fresh.labels, training.labels)


def cmd_compare(cfg: ExperimentConfig, args) -> int:
    training, ensemble, generated = _dataset(cfg, args)
    model_path = Path(args.model) if args.model else Path(cfg.output.dir) / "model.json"
    functions, kernel, lambdas = load_model(model_path)
    if len(functions) != ensemble.m:
        raise InputError(f"model has {len(functions)} agents, dataset has {ensemble.m}")
    if lambdas is None:
        lambdas = _lambdas(cfg, ensemble.m)
    # the config's target describes the data only if the config reproduces it
    target = None
    if generated or _config_reproduces(cfg, training):
        target = cfg.data.synthetic_target()
    report = compare_report(training, functions, kernel, lambdas, target)
    path = _out_dir(cfg) / "compare.json"
    path.write_text(json.dumps(report, indent=1) + "\n")
    print(f"centralized lambda = {report['lambda']:g}")
    print("agent  max|f_i - f_c|   mse(labels)" + ("   mse(target)" if target is not None else ""))
    for row in report["agents"]:
        line = f"{row['agent']:>5}  {row['max_gap_to_centralized']:.3e}        {row['mse_labels']:.4e}"
        if target is not None:
            line += f"    {row['mse_target']:.4e}"
        print(line)
    print(f"wrote {path}")
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "check": cmd_check,
    "oracle": cmd_oracle,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="collabkrr", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, help="override data.seed")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        if name != "gen":
            p.add_argument("--data", help="dataset JSON (default <out>/dataset.json)")
        if name == "train":
            p.add_argument("--oracle", action="store_true",
                           help="solve the relaxed problem first and log the distance to it")
        if name == "compare":
            p.add_argument("--model", help="model JSON (default <out>/model.json)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be a non-negative integer", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        return COMMANDS[args.command](cfg, args)
    except (InputError, StoreError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
