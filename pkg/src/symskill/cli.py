"""Command line entry point.

Subcommands: train, eval, nav, serve, export-plots. Exit codes: 0 on
success, 2 on configuration errors, 3 on numeric aborts.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import OUTPUT_ROOT_ENV, resolve_config
from .errors import ConfigError, NumericError


def _check_registry_match(bundle, cfg) -> None:
    """Fail naming the first differing factor when a config is supplied
    alongside a bundle trained against a different skill layout."""
    want = cfg.registry()
    got = bundle.registry
    by_name = {f.name: f for f in got.factors}
    for f in want.factors:
        g = by_name.get(f.name)
        if g is None:
            raise ConfigError(
                f"registry mismatch: factor '{f.name}' is in the config but "
                f"not in the bundle")
        for attr in ("state_slice", "algorithm", "skill_dim", "mirror"):
            if getattr(f, attr) != getattr(g, attr):
                raise ConfigError(
                    f"registry mismatch: factor '{f.name}' differs on "
                    f"{attr} (config {getattr(f, attr)!r}, bundle "
                    f"{getattr(g, attr)!r})")
    extra = [f.name for f in got.factors if f.name not in
             {x.name for x in want.factors}]
    if extra:
        raise ConfigError(
            f"registry mismatch: factor '{extra[0]}' is in the bundle but "
            f"not in the config")


def cmd_train(args) -> int:
    from .training import Trainer

    if args.resume:
        trainer = Trainer.resume(args.resume, out_dir=args.out)
        if args.seed is not None:
            raise ConfigError("--seed cannot be changed when resuming")
    else:
        cfg = resolve_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.iterations is not None:
            cfg.iterations = args.iterations
        cfg.validate()
        trainer = Trainer(cfg, out_dir=args.out)
    total = args.iterations if args.iterations is not None else None
    last = trainer.run(total)
    trainer.export_bundle(trainer.out_dir / "bundle.json")
    print(f"trained {trainer.iteration} iterations -> {trainer.out_dir}")
    if last:
        rf = ", ".join(f"{k}={v:+.3f}"
                       for k, v in last["reward_factors"].items())
        print(f"final rewards: {rf}; style={last['reward_style']:+.3f}")
    return 0


def cmd_eval(args) -> int:
    from .evaluation import evaluate_bundle
    from .training import load_inference

    bundle, prior, _ = load_inference(args.bundle)
    if args.config:
        _check_registry_match(bundle, resolve_config(args.config))
    report = evaluate_bundle(
        bundle, prior, n_skills=args.n_skills, steps=args.steps,
        seed=args.seed, allow_small=args.allow_small)
    record = report.to_record()
    out = Path(args.out) if args.out else (
        Path(args.bundle).parent / "eval_summary.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(record, indent=2) + "\n")
    for name, v in record["scores"].items():
        print(f"score[{name}] = {'n/a' if v is None else f'{v:+.4f}'}")
    for name, v in record["diversity"].items():
        print(f"diversity[{name}] = {v:.4f}")
    for name, v in record["safety"].items():
        print(f"safety[{name}] = {v:.4f}")
    print(f"wrote {out}")
    return 0


def cmd_nav(args) -> int:
    from .nav import NavConfig, evaluate_nav, format_nav_table, train_nav
    from .training import load_inference

    bundle = prior = None
    if args.bundle:
        bundle, prior, _ = load_inference(args.bundle)
    elif args.mode == "skill":
        raise ConfigError("nav --mode skill requires --bundle")
    cfg = NavConfig(mode=args.mode, seed=args.seed,
                    iterations=args.iterations).validate()
    actor, history = train_nav(cfg, bundle=bundle, prior=prior)
    record = evaluate_nav(cfg, actor, bundle=bundle, prior=prior,
                          n_episodes=args.episodes)
    print(format_nav_table([record]))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(record, indent=2) + "\n")
        print(f"wrote {out}")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(args.bundle, host=args.host, port=args.port)
    return 0


def cmd_export_plots(args) -> int:
    from .plots import export_run

    written = export_run(args.run, out_dir=args.out,
                         compare_with=args.compare or None)
    for p in written:
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="symskill",
        description="Factorized skill discovery with symmetry augmentation "
                    "on a planar point agent.",
        epilog=f"Training output root defaults to ./runs; override with "
               f"--out or the {OUTPUT_ROOT_ENV} environment variable.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a skill policy")
    t.add_argument("--config", required=False,
                   help="YAML config path or preset name "
                        "(metra, diayn, dusdi, 2xmetra, mixed)")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--iterations", type=int, default=None,
                   help="total iteration target (overrides the config)")
    t.add_argument("--out", default=None, help="output directory")
    t.add_argument("--resume", default=None,
                   help="training checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a trained bundle")
    e.add_argument("--bundle", required=True, help="checkpoint path")
    e.add_argument("--config", default=None,
                   help="config to cross-check the bundle registry against")
    e.add_argument("--n-skills", type=int, default=2000)
    e.add_argument("--steps", type=int, default=None)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--allow-small", action="store_true",
                   help="waive the minimum rollout counts (smoke runs)")
    e.add_argument("--out", default=None, help="summary JSON path")
    e.set_defaults(func=cmd_eval)

    n = sub.add_parser("nav", help="train and score a goal-reaching "
                                   "high-level controller")
    n.add_argument("--mode", required=True,
                   choices=("direct", "oracle", "skill"))
    n.add_argument("--bundle", default=None,
                   help="skill bundle (required for --mode skill)")
    n.add_argument("--iterations", type=int, default=200)
    n.add_argument("--episodes", type=int, default=200)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--out", default=None, help="summary JSON path")
    n.set_defaults(func=cmd_nav)

    s = sub.add_parser("serve", help="run the live skill-commanding "
                                     "session service")
    s.add_argument("--bundle", required=True, help="checkpoint path")
    s.add_argument("--port", type=int, default=8765)
    s.add_argument("--host", default="127.0.0.1")
    s.set_defaults(func=cmd_serve)

    x = sub.add_parser("export-plots", help="emit plot-data CSVs for a run")
    x.add_argument("--run", required=True, help="run directory")
    x.add_argument("--out", default=None, help="output directory "
                                               "(default <run>/plots)")
    x.add_argument("--compare", nargs="*", default=None,
                   help="additional run directories for a score comparison")
    x.set_defaults(func=cmd_export_plots)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train" and not args.resume and not args.config:
        print("config error: train needs --config or --resume",
              file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
