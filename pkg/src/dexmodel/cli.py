"""Command line entry point: ``dexmodel <subcommand> --config FILE --seed N --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 runtime error. ``--seed``
replaces the config's seed list with that one seed. Every result file embeds
the resolved config and the build version, and holds no timestamps, so
reruns with the same config and seed are byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import bench
from .config import ExperimentConfig, load_config
from .gesture import LlmClientConfig, generate_gesture, llm_generate_cost, parse_cost
from .gesture.builtins import exemplars_for, ok_eq_source
from .gesture.dsl import DslError
from .internal import estimate_sigma, train_forward, train_inverse
from .io import (DimensionMismatchError, load_dataset, save_csv, save_dataset, save_model, save_result)
from .sim import ConfigError, ReachEnv, reach_error, sample_reachable_target

log = logging.getLogger("dexmodel")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _dataset(cfg, seed):
    return load_dataset(cfg.dataset) if cfg.dataset else bench.explore(cfg, seed)


def cmd_explore(cfg, seed, out):
    data = bench.explore(cfg, seed)
    save_dataset(data, out / "dataset.jsonl")
    _, a, _, _, _ = data.transitions()
    save_result(out / "explore.json", "explore", cfg.to_dict(), {
        "seed": seed, "episodes": len(data.episodes), "transitions": len(data),
        "state_dim": data.state_dim, "action_dim": data.action_dim,
        "action_mean": a.mean(axis=0).tolist()})


def cmd_train_forward(cfg, seed, out):
    data = _dataset(cfg, seed)
    fm = train_forward(data, cfg.forward.train_config(seed))
    save_model(fm, out / "forward.json")
    save_result(out / "train_forward.json", "train-forward", cfg.to_dict(), {
        "seed": seed, "heldout_mse": fm.report["heldout_mse"],
        "train_transitions": fm.report["train_transitions"]})


def cmd_train_inverse(cfg, seed, out):
    data = _dataset(cfg, seed)
    im = train_inverse(data, cfg.inverse.train_config(seed))
    sigma = estimate_sigma(im, data)
    save_model(im, out / "inverse.json")
    save_result(out / "train_inverse.json", "train-inverse", cfg.to_dict(), {
        "seed": seed, "train_l1": im.report["train_l1"], "sigma": sigma.tolist()})


def cmd_plan(cfg, seed, out):
    hand = cfg.hand_config()
    fm, im, _ = bench.obtain_models(cfg, seed, need_inverse=cfg.planner == "ours")
    planner = bench.make_planner(cfg.planner, fm, im, cfg.resolved_budget(), seed)
    eps = bench.reach_episodes(hand, cfg.setting, planner, 1, seed, cfg.max_steps)
    target = sample_reachable_target(hand, bench.target_seed(seed, 0))
    start = ReachEnv(hand, cfg.setting).state.tips
    save_result(out / "plan.json", "plan", cfg.to_dict(), {
        "seed": seed, "target": target.tolist(),
        "initial_error": float(reach_error(hand, start, target)), **eps[0]})


def cmd_bench_reach(cfg, seed, out):
    rows = bench.run_reach_benchmark(cfg, log=log.info)
    header, body = bench.metrics_csv_rows(rows)
    save_csv(out / "metrics.csv", header, body)
    save_result(out / "bench_reach.json", "bench-reach", cfg.to_dict(), [r.to_dict() for r in rows])


def cmd_bench_inhand(cfg, seed, out):
    curves, summary = bench.bench_inhand(cfg, log=log.info)
    keys = ("learner", "seed", "iteration", "env_steps", "success_rate", "mean_reward")
    save_csv(out / "inhand_curves.csv", keys, [tuple(c[k] for k in keys) for c in curves])
    save_result(out / "bench_inhand.json", "bench-inhand", cfg.to_dict(), {"summary": summary})


def cmd_ablate_data(cfg, seed, out):
    cells, summary = bench.ablate_data_dim(cfg, log=log.info)
    keys = ("hand", "K", "N", "seed", "mse")
    save_csv(out / "ablate_data.csv", keys, [tuple(c[k] for k in keys) for c in cells])
    save_result(out / "ablate_data.json", "ablate-data", cfg.to_dict(), {"summary": summary})


def cmd_ablate_budget(cfg, seed, out):
    rows, summary = bench.ablate_budget(cfg, log=log.info)
    keys = ("seed", "planner", "samples", "iterations", "episode", "reach_error_cm")
    save_csv(out / "ablate_budget.csv", keys, [tuple(r[k] for k in keys) for r in rows])
    save_result(out / "ablate_budget.json", "ablate-budget", cfg.to_dict(), {"summary": summary})


def gesture_program(cfg, hand):
    g = cfg.gesture
    if g.program is not None:
        return parse_cost(g.program, hand.num_fingers)
    if g.request is not None:
        client = LlmClientConfig(endpoint=g.endpoint, model=g.model, api_key_env=g.api_key_env,
                                 timeout=g.timeout, offline=g.offline, canned_dir=g.canned_dir)
        return llm_generate_cost(g.request, exemplars_for(hand, g.exemplars), client, hand)
    return parse_cost(ok_eq_source(hand), hand.num_fingers)


def cmd_gesture(cfg, seed, out):
    qcfg = dataclasses.replace(cfg, setting="quasi_static")
    hand = qcfg.hand_config()
    prog = gesture_program(qcfg, hand)
    fm, im, data = bench.obtain_models(qcfg, seed)
    data = data if data is not None else _dataset(qcfg, seed)
    anchors = data.transitions()[2]
    res = generate_gesture(fm, im, prog, hand, anchors, qcfg.resolved_budget(), seed=seed)
    save_result(out / "gesture.json", "gesture", cfg.to_dict(),
                {"seed": seed, "canonical": prog.canonical(), **res.to_dict()})


def cmd_synergy(cfg, seed, out):
    actions, rep = bench.run_synergy(cfg, seed, log=log.info)
    save_csv(out / "synergy_spectrum.csv", ("component", "explained_variance", "cumulative_ratio"),
             [(i + 1, v, r) for i, (v, r) in enumerate(zip(rep.explained_variance, rep.cumulative_ratio))])
    k = rep.correlation.shape[0]
    save_csv(out / "synergy_correlation.csv", [f"a{i}" for i in range(k)],
             [tuple(row) for row in rep.correlation])
    save_result(out / "synergy.json", "synergy", cfg.to_dict(),
                {"seed": seed, "samples": int(len(actions)), **rep.to_dict()})


COMMANDS = {
    "explore": cmd_explore,
    "train-forward": cmd_train_forward,
    "train-inverse": cmd_train_inverse,
    "plan": cmd_plan,
    "bench-reach": cmd_bench_reach,
    "bench-inhand": cmd_bench_inhand,
    "ablate-data": cmd_ablate_data,
    "ablate-budget": cmd_ablate_budget,
    "gesture": cmd_gesture,
    "synergy": cmd_synergy,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="dexmodel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON or YAML experiment file (defaults if omitted)")
        p.add_argument("--seed", type=int, help="run with this single seed instead of the config's")
        p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seeds=(args.seed,))
        seed = cfg.seeds[0]
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, seed, args.out)
    except (ConfigError, DimensionMismatchError, DslError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - any other failure is a runtime error
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
