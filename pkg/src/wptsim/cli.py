"""Command-line harness (`wpt`).

Subcommands: optimize, train, evaluate, sweep, fading-study, fit-eh,
dump-profile. Exit codes: 0 success, 2 validation error, 3 numerical
failure. Power arguments accept explicit unit suffixes ("3 W", "250 mW").
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from . import bench
from .allocate import solve_convex
from .channel import dump_channels_csv, realize_horizon
from .errors import NumericalError, ScenarioError
from .field import build_field
from .harvest import fit_model, load_calibration_csv, model_from_code
from .rl import evaluate_policy, load_checkpoint, save_checkpoint, train
from .scenario import ScenarioConfig, load_scenario, rng_stream
from .units import format_power, parse_power


def _add_common(parser: argparse.ArgumentParser, scenario: bool = True) -> None:
    if scenario:
        parser.add_argument("--scenario", required=True, help="scenario JSON file")
        parser.add_argument("--seed", type=int, default=None,
                            help="override the scenario seed")
    parser.add_argument("--out-dir", default=".", help="directory for output files")


def _load(args) -> ScenarioConfig:
    config = load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(config, seed=args.seed)
    return config


def _out(args, name: str | None) -> Path | None:
    if name is None:
        return None
    path = Path(name)
    if not path.is_absolute():
        path = Path(args.out_dir) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_optimize(args) -> int:
    config = _load(args)
    if args.no_solver_clamp:
        config = dataclasses.replace(
            config, solver=dataclasses.replace(config.solver, clamp_in_solver=False)
        )
    assumed = model_from_code(args.assumed, config.eh_models)
    actual = model_from_code(args.actual, config.eh_models)
    stats = build_field(config, rng_stream(config, "field"))
    slots = realize_horizon(config, stats, rng_stream(config, "fading"))
    if args.dump_channels:
        dump_channels_csv(slots, _out(args, args.dump_channels))
    plan = solve_convex(config, slots, stats, assumed)
    realized, repaired = bench.evaluate_plan(plan, slots, stats, actual, config)
    bench.write_plan_csv(repaired if args.assumed != args.actual else plan,
                         _out(args, args.out))
    summary = {
        "label": f"OPT-{args.assumed.upper()}-{args.actual.upper()}",
        "objective": plan.objective,
        "realized_objective": realized,
        "normalized_distortion": bench.normalized_distortion(
            realized, stats, config.horizon),
        "kkt_residual": plan.kkt_residual,
        "power_budget": format_power(config.power_budget),
    }
    if args.summary:
        _out(args, args.summary).write_text(json.dumps(summary, indent=2) + "\n",
                                            encoding="utf-8")
    print(json.dumps(summary, indent=2))
    return 0


def _cmd_train(args) -> int:
    config = _load(args)
    model = model_from_code(args.model, config.eh_models) if args.model else config.eh_model
    result = train(config, args.episodes, model=model, paper_scale=args.paper_scale)
    if args.out:
        with open(_out(args, args.out), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "mean_distortion", "kl", "policy_entropy",
                             "slots_seen"])
            for pt in result.curve:
                writer.writerow([pt.episode, f"{pt.mean_distortion:.12e}",
                                 f"{pt.kl:.6e}", f"{pt.entropy:.6e}", pt.slots_seen])
    if args.checkpoint:
        save_checkpoint(_out(args, args.checkpoint), result.policy, result.value,
                        result.obs_norm,
                        extra={"episodes": result.episodes, "model": model.variant})
    last = result.curve[-1]
    print(f"trained {result.episodes} episodes; "
          f"final batch mean distortion {last.mean_distortion:.6g}")
    return 0


def _cmd_evaluate(args) -> int:
    config = _load(args)
    policy, _, norm, extra = load_checkpoint(args.checkpoint)
    model = (model_from_code(args.model, config.eh_models) if args.model
             else config.eh_models.get(extra.get("model"), config.eh_model))
    mean, std = evaluate_policy(config, policy, norm, args.episodes, model=model)
    print(json.dumps({"mean_distortion": mean, "std": std,
                      "episodes": args.episodes}, indent=2))
    return 0


def _cmd_sweep(args) -> int:
    config = _load(args)
    budgets = [parse_power(b) for b in args.budgets.split(",") if b.strip()]
    labels = [lab.strip() for lab in args.labels.split(",") if lab.strip()]
    results = bench.sweep_budget(config, budgets, labels, rl_episodes=args.rl_episodes)
    bench.write_results_csv(results, _out(args, args.out))
    for row in results:
        print(f"{row.label}  P_B={format_power(row.budget):>10}  "
              f"err_norm={row.normalized_distortion:.6e}")
    return 0


def _cmd_fading_study(args) -> int:
    config = _load(args)
    model = model_from_code(args.model, config.eh_models) if args.model else config.eh_model
    trained = None
    if args.checkpoint:
        policy, _, norm, _ = load_checkpoint(args.checkpoint)
        trained = bench.TrainedPolicy(policy, norm, model)
    rows = bench.fading_study(config, args.realizations, model=model,
                              trained=trained, rl_episodes=args.rl_episodes)
    if args.out:
        bench.write_fading_csv(rows, _out(args, args.out))
    for row in rows:
        print(f"{row.arm:>18}: err_norm={row.normalized_distortion:.6e} "
              f"(+- {row.std_error:.2e}, n={row.n_realizations})")
    order = {row.arm: row.normalized_distortion for row in rows}
    ok = order["full_csi_opt"] <= order["rl"] <= order["mean_channel_opt"]
    print("ordering full_csi_opt <= rl <= mean_channel_opt:", "yes" if ok else "no")
    return 0


def _cmd_fit_eh(args) -> int:
    variant = {"linear": "linear", "quad": "quadratic", "logistic": "logistic"}[args.variant]
    samples = load_calibration_csv(args.data)
    model = fit_model(variant, samples)
    out = {"variant": model.variant}
    if model.zeta is not None:
        out["zeta"] = model.zeta
    if model.alpha is not None:
        out["alpha"] = list(model.alpha)
    if model.beta is not None:
        out["beta"] = list(model.beta)
    if model.saturation_input is not None:
        out["saturation_input_watts"] = model.saturation_input
    print(json.dumps(out, indent=2))
    return 0


def _cmd_dump_profile(args) -> int:
    plan = bench.read_plan_csv(args.plan)
    rows, score = bench.power_profile(plan, args.period)
    bench.write_profile_csv(rows, score, _out(args, args.out))
    print(json.dumps({"rows": len(rows), "periodicity_score": score}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wpt",
        description="Wirelessly powered sensor network: allocation benchmark and RL agent",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="solve the convex benchmark for one scenario")
    _add_common(p)
    p.add_argument("--assumed", required=True, choices=["L", "Q"],
                   help="EH model assumed by the solver")
    p.add_argument("--actual", required=True, choices=["L", "Q", "S"],
                   help="EH model of the actual hardware")
    p.add_argument("--out", required=True, help="plan CSV output")
    p.add_argument("--summary", default=None, help="summary JSON output")
    p.add_argument("--dump-channels", default=None, help="debug CSV of realized gains")
    p.add_argument("--no-solver-clamp", action="store_true",
                   help="drop the saturation clamp inside the solver (evaluation keeps it)")

    p = sub.add_parser("train", help="train the RL agent")
    _add_common(p)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--out", default=None, help="learning-curve CSV")
    p.add_argument("--checkpoint", default=None, help="policy checkpoint output")
    p.add_argument("--model", default=None, choices=["L", "Q", "S"],
                   help="hardware model (default: scenario's active model)")
    p.add_argument("--paper-scale", action="store_true",
                   help="use the paper-scale network sizes")

    p = sub.add_parser("evaluate", help="greedy-evaluate a trained policy")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--model", default=None, choices=["L", "Q", "S"])

    p = sub.add_parser("sweep", help="distortion vs power budget for labeled scenarios")
    _add_common(p)
    p.add_argument("--budgets", required=True,
                   help="comma-separated budgets with units, e.g. '1W,2W,3W'")
    p.add_argument("--labels", required=True,
                   help="comma-separated labels, e.g. 'OPT-L-L,OPT-L-Q,OPT-Q-Q'")
    p.add_argument("--out", required=True)
    p.add_argument("--rl-episodes", type=int, default=2000,
                   help="training budget for RL labels without checkpoints")

    p = sub.add_parser("fading-study",
                       help="full-CSI vs mean-channel vs RL under stochastic fading")
    _add_common(p)
    p.add_argument("--realizations", type=int, default=100)
    p.add_argument("--model", default=None, choices=["L", "Q"])
    p.add_argument("--checkpoint", default=None, help="reuse a trained policy")
    p.add_argument("--rl-episodes", type=int, default=4000)
    p.add_argument("--out", default=None)

    p = sub.add_parser("fit-eh", help="least-squares fit of an EH model to a CSV")
    _add_common(p, scenario=False)
    p.add_argument("--variant", required=True, choices=["linear", "quad", "logistic"])
    p.add_argument("--data", required=True, help="CSV with header input_mw,output_mw")

    p = sub.add_parser("dump-profile", help="power profile and periodicity of a plan CSV")
    _add_common(p, scenario=False)
    p.add_argument("--plan", required=True, help="plan CSV from `wpt optimize`")
    p.add_argument("--period", type=int, required=True, help="covariance period")
    p.add_argument("--out", required=True)

    return parser


_HANDLERS = {
    "optimize": _cmd_optimize,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "fading-study": _cmd_fading_study,
    "fit-eh": _cmd_fit_eh,
    "dump-profile": _cmd_dump_profile,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
