"""Command-line interface: gen, train, eval, bench, analyze.

Exit codes: 0 success, 1 usage or configuration error, 2 verification
failure (a generated artifact failed its own checks).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .actions import ActionSpaceSpec
from .bench import DEFAULT_ENV_COUNTS, bench_table, count_step_allocations, run_bench
from .config import (
    ALGORITHMS,
    ENV_PRESETS,
    HEADS,
    ExperimentConfig,
    load_env_preset,
    load_train_preset,
    read_config,
)
from .env import write_trajectory
from .evaluate import evaluate_policy, report_table, report_to_json
from .generation import generate_scenario, scenario_to_bytes, scenario_to_text
from .oracle import InfeasibleScenarioError, count_active_hosts, replay_plan, solve
from .policy import load_checkpoint
from .trainer import train
from .validation import ValidationError

USAGE_ERROR = 1
VERIFICATION_ERROR = 2


def _parse_algo(text: str) -> tuple[str, str]:
    try:
        algo, head = text.split("-", 1)
    except ValueError:
        raise ValidationError(f"--algo must look like dr-flat, got {text!r}")
    if algo not in ALGORITHMS or head not in HEADS:
        raise ValidationError(f"--algo must be one of {ALGORITHMS} x {HEADS}, got {text!r}")
    return algo, head


def _load_experiment(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = read_config(args.config)
    elif getattr(args, "algo", None):
        algo, head = _parse_algo(args.algo)
        cfg = load_train_preset(args.preset, algo, head)
    else:
        cfg = load_env_preset(args.preset)
    if getattr(args, "td", None) is not None:
        cfg = dataclasses.replace(cfg, train_td=args.td)
    if getattr(args, "total_steps", None) is not None:
        cfg = dataclasses.replace(cfg, ppo=dataclasses.replace(cfg.ppo, total_steps=args.total_steps))
    return cfg.validate()


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen(args) -> int:
    cfg = _load_experiment(args)
    params = cfg.training_generation
    out = _outdir(args)
    failures = 0
    report_lines = []
    for i in range(args.n):
        seed = rngmod.mix64(args.seed, i) & ((1 << 62) - 1)
        scenario = generate_scenario(params, seed)
        blob = scenario_to_bytes(scenario)
        (out / f"scenario_{i:05d}.bin").write_bytes(blob)
        if args.text:
            (out / f"scenario_{i:05d}.txt").write_text(scenario_to_text(scenario))
        try:
            plan = solve(scenario, cfg.env)
            solved, total, records = replay_plan(scenario, cfg.env, plan)
            ok = solved
            if args.text:
                write_trajectory(records, out / f"plan_{i:05d}.jsonl")
        except InfeasibleScenarioError as exc:
            ok = False
            total = float("nan")
            plan = None
        failures += not ok
        report_lines.append(json.dumps({
            "index": i, "seed": seed, "solvable": bool(ok),
            "plan_length": len(plan.steps) if plan else None,
            "plan_reward": total if ok else None,
            "active_hosts": count_active_hosts(scenario),
        }, sort_keys=True))
    (out / "report.jsonl").write_text("\n".join(report_lines) + "\n")
    print(f"generated {args.n} scenarios in {out}; solvable {args.n - failures}/{args.n}")
    return 0 if failures == 0 else VERIFICATION_ERROR


def cmd_train(args) -> int:
    cfg = _load_experiment(args)
    out = _outdir(args)
    outcome = train(cfg, run_seed=args.seed, out_dir=out)
    print(f"trained {outcome.global_steps} steps; "
          f"train-density solve rate {outcome.best_train_solve_rate:.3f}")
    print(f"checkpoint: {out / 'checkpoint.npz'}; metrics: {out / 'metrics.jsonl'}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_experiment(args)
    arch, params, _, step_count = load_checkpoint(args.checkpoint)
    spec = ActionSpaceSpec.from_params(cfg.generation)
    if arch.n_actions != spec.total_actions:
        print(f"checkpoint action space ({arch.n_actions}) does not match preset "
              f"({spec.total_actions})", file=sys.stderr)
        return USAGE_ERROR
    reports = []
    for set_id, td in enumerate(cfg.eval_tds or (cfg.training_generation.topology_density,)):
        reports.append(evaluate_policy(params, arch.head, cfg, td, set_id))
    table = report_table(reports)
    print(table, end="")
    if args.out:
        out = _outdir(args)
        (out / "eval_report.txt").write_text(table)
        (out / "eval_report.jsonl").write_text("\n".join(report_to_json(r) for r in reports) + "\n")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_experiment(args)
    params = cfg.training_generation
    counts = tuple(args.env_counts) if args.env_counts else DEFAULT_ENV_COUNTS
    rows = run_bench(params, cfg.env, counts, seed=args.seed)
    allocs = count_step_allocations(params, cfg.env, seed=args.seed)
    table = bench_table(rows, allocs)
    print(table, end="")
    if args.out:
        out = _outdir(args)
        (out / "bench.txt").write_text(table)
        (out / "bench.jsonl").write_text(
            "\n".join(json.dumps(dataclasses.asdict(r), sort_keys=True) for r in rows) + "\n"
        )
    by_count = {r.n_envs: r.steps_per_s for r in rows}
    if 8 in by_count and 1024 in by_count and allocs == 0:
        print(f"scaling 1024/8: {by_count[1024] / by_count[8]:.1f}x")
        return 0
    if allocs != 0:
        print(f"allocation check failed: {allocs} events", file=sys.stderr)
        return VERIFICATION_ERROR
    return 0


def cmd_analyze(args) -> int:
    cfg = _load_experiment(args)
    tds = cfg.eval_tds or (cfg.training_generation.topology_density,)
    out = _outdir(args) if args.out else None
    means = []
    for td in tds:
        params = dataclasses.replace(cfg.generation, topology_density=td)
        counts = np.empty(args.samples, dtype=np.int64)
        for i in range(args.samples):
            seed = rngmod.mix64(args.seed, int(td * 10_000), i) & ((1 << 62) - 1)
            counts[i] = count_active_hosts(generate_scenario(params, seed))
        hist = np.bincount(counts, minlength=params.n_hosts + 1)
        mean = float(counts.mean())
        means.append(mean)
        q1, q2, q3 = (float(np.percentile(counts, q)) for q in (25, 50, 75))
        print(f"td={td:<6g} mean_active={mean:6.2f} quartiles=({q1:.0f}, {q2:.0f}, {q3:.0f}) "
              f"max={params.n_hosts}")
        if out is not None:
            (out / f"active_hosts_td_{td}.json").write_text(json.dumps({
                "td": td, "samples": args.samples, "mean": mean,
                "quartiles": [q1, q2, q3],
                "histogram": hist.tolist(),
            }, sort_keys=True) + "\n")
    increasing = all(b > a for a, b in zip(means, means[1:]))
    if len(tds) > 1:
        print(f"means strictly increasing with td: {increasing}")
    return 0 if increasing or len(tds) == 1 else VERIFICATION_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pensim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=False):
        p.add_argument("--preset", choices=ENV_PRESETS, default="smoke")
        p.add_argument("--config", help="explicit experiment config file (overrides --preset)")
        p.add_argument("--td", type=float, help="override the training topology density")
        p.add_argument("--seed", type=int, default=0)
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        else:
            p.add_argument("--out", help="output directory")

    p = sub.add_parser("gen", help="generate scenarios and verify solvability")
    common(p, needs_out=True)
    p.add_argument("-n", type=int, default=100, help="number of scenarios")
    p.add_argument("--text", action="store_true", help="also write text dumps")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("train", help="train a policy")
    common(p, needs_out=True)
    p.add_argument("--algo", default="dr-flat", help="one of {dr,plr,rplr}-{flat,2sas}")
    p.add_argument("--total-steps", type=int, dest="total_steps")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint over the preset's eval sets")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="throughput scaling curve")
    common(p)
    p.add_argument("--env-counts", type=int, nargs="*", dest="env_counts")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("analyze", help="active-host distributions per density")
    common(p)
    p.add_argument("--samples", type=int, default=10_000)
    p.set_defaults(fn=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ValidationError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
