"""Plot-data exports: tabular series files derived from a run directory,
meant for external plotting tools. No figures are rendered here.

Outputs per run: training curves, evaluation score series when an eval
summary exists, a roll/pitch reached-state scatter when a checkpoint exists,
and an optional cross-run score comparison.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .env import EnvConfig, StyleRegConfig
from .errors import ConfigError
from .evaluation import skill_rollout_stats, uniform_lambda
from .skills import sample_skills

SCATTER_SKILLS = 32
SCATTER_STEPS = 120


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    out = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if line:
            out.append(json.loads(line))
    return out


def export_training_curves(metrics_path, out_path) -> Path:
    """One row per iteration; an empty or missing log yields a header-only
    file that still parses as CSV."""
    records = _read_jsonl(Path(metrics_path))
    out_path = Path(out_path)
    factor_names = sorted(records[0]["reward_factors"]) if records else []
    cols = (["iteration"]
            + [f"reward_{n}" for n in factor_names]
            + ["reward_style", "reward_reg", "approx_kl", "clip_fraction",
               "entropy", "tilt_contact_rate", "level_mean", "epochs_run"])
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in records:
            w.writerow(
                [r["iteration"]]
                + [r["reward_factors"][n] for n in factor_names]
                + [r["reward_style"], r["reward_reg"], r["approx_kl"],
                   r["clip_fraction"], r["entropy"], r["tilt_contact_rate"],
                   r["level_mean"], r["epochs_run"]])
    return out_path


def export_eval_scores(summary_path, out_path) -> Path:
    with open(summary_path) as fh:
        rep = json.load(fh)
    out_path = Path(out_path)
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "name", "value"])
        for name, v in rep.get("scores", {}).items():
            w.writerow(["score", name, "" if v is None else v])
        for name, v in rep.get("diversity", {}).items():
            w.writerow(["diversity", name, v])
        for name, v in rep.get("safety", {}).items():
            w.writerow(["safety", name, v])
    return out_path


def export_rollpitch_scatter(ckpt_path, out_path, *, n_skills=SCATTER_SKILLS,
                             steps=SCATTER_STEPS, seed=0) -> Path:
    """Reached roll/pitch per commanded skill: one rollout per skill under
    the frozen bundle, final and mean tilt coordinates with a skill label."""
    from .training import load_inference

    bundle, prior, _ = load_inference(ckpt_path)
    registry = bundle.registry
    rng = np.random.default_rng(seed)
    zs = sample_skills(prior, registry, rng, n_skills)
    lam = uniform_lambda(registry.num_factors, n_skills)
    stats = skill_rollout_stats(
        bundle, zs, lam, env_cfg=EnvConfig(), style_cfg=StyleRegConfig(),
        steps=steps, seed=seed, with_scores=False)
    out_path = Path(out_path)
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["skill", "roll_final", "pitch_final", "roll_mean",
                    "pitch_mean", "z"])
        for i in range(n_skills):
            w.writerow([
                i,
                float(stats.final_states[i, 8]),
                float(stats.final_states[i, 9]),
                float(stats.mean_states[i, 8]),
                float(stats.mean_states[i, 9]),
                json.dumps([round(float(v), 6) for v in zs[i]]),
            ])
    return out_path


def export_score_comparison(run_dirs: list, out_path) -> Path:
    """Stacked eval scores across runs (weighted-vs-unweighted and
    with-vs-without-style series come from naming the runs accordingly)."""
    out_path = Path(out_path)
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "kind", "name", "value"])
        for rd in run_dirs:
            rd = Path(rd)
            summary = rd / "eval_summary.json"
            if not summary.exists():
                raise ConfigError(f"{summary} missing; run the eval first")
            rep = json.loads(summary.read_text())
            for name, v in rep.get("scores", {}).items():
                w.writerow([rd.name, "score", name, "" if v is None else v])
            for name, v in rep.get("diversity", {}).items():
                w.writerow([rd.name, "diversity", name, v])
    return out_path


def export_run(run_dir, out_dir=None, compare_with: list | None = None) -> list:
    """Every export that the run directory's contents support."""
    run = Path(run_dir)
    if not run.exists():
        raise ConfigError(f"run directory {run} does not exist")
    out = Path(out_dir) if out_dir else run / "plots"
    out.mkdir(parents=True, exist_ok=True)
    written = [export_training_curves(run / "metrics.jsonl",
                                      out / "training_curves.csv")]
    summary = run / "eval_summary.json"
    if summary.exists():
        written.append(export_eval_scores(summary, out / "eval_scores.csv"))
    ckpt = run / "checkpoint.json"
    if ckpt.exists():
        written.append(export_rollpitch_scatter(
            ckpt, out / "rollpitch_scatter.csv"))
    if compare_with:
        written.append(export_score_comparison(
            [run, *compare_with], out / "score_comparison.csv"))
    return written
