"""Evaluation protocols: AR/EL statistics, the 3-second success rule, target-size
and deviation accuracy metrics, recovery-from-loss measurement."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .env import EpisodeLog
from .net import NetworkParams, RecurrentState, forward, greedy_action

DEFAULT_LOST_WINDOW = 60  # 3 s at the 20 Hz control rate


@dataclass
class EvalReport:
    episodes: int
    ar_mean: float
    ar_std: float
    el_mean: float
    el_std: float
    success_rate: float
    target_size_mean: float
    target_size_std: float
    deviation_mean: float
    deviation_std: float
    recovery_latencies: list[int] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)  # one dict per episode


def lost_runs(log: EpisodeLog):
    """Maximal runs of consecutive steps with no target pixels: (start, length)."""
    runs = []
    start = None
    for i, step in enumerate(log.steps):
        if step.get("bbox") is None:
            if start is None:
                start = i
        elif start is not None:
            runs.append((start, i - start))
            start = None
    if start is not None:
        runs.append((start, len(log.steps) - start))
    return runs


def classify_success(log: EpisodeLog, lost_window: int = DEFAULT_LOST_WINDOW):
    """Failure iff the target stays lost for lost_window consecutive steps;
    success means reaching max_steps without such a run."""
    runs = lost_runs(log)
    for start, length in runs:
        if length >= lost_window:
            return False, runs
    if log.summary is not None and log.summary.get("done_reason") == "max_steps":
        return True, runs
    return False, runs


def recovery_stats(logs, lost_window: int = DEFAULT_LOST_WINDOW):
    """Reacquisition latencies of loss events shorter than the failure window."""
    latencies = []
    for log in logs:
        n = len(log.steps)
        for start, length in lost_runs(log):
            if length < lost_window and start + length < n:
                latencies.append(length)
    latencies.sort()
    median = float(np.median(latencies)) if latencies else None
    return {"latencies": latencies, "median": median, "events": len(latencies)}


def _episode_metrics(log: EpisodeLog, lost_window: int):
    width = log.header.get("camera", {}).get("width")
    sizes = []
    deviations = []
    for step in log.steps:
        bb = step.get("bbox")
        if bb is None:
            continue
        sizes.append(bb["area_fraction"])
        if width:
            center = (width - 1) / 2.0
            deviations.append((bb["cx"] - center) / (width / 2.0))
    ok, runs = classify_success(log, lost_window)
    return {
        "AR": log.summary["AR"],
        "EL": log.summary["EL"],
        "done_reason": log.summary["done_reason"],
        "success": ok,
        "sizes": sizes,
        "deviations": deviations,
        "lost_runs": runs,
    }


def evaluate(policy_runner, env_factory, episodes: int, seed: int = 0,
             lost_window: int = DEFAULT_LOST_WINDOW) -> EvalReport:
    """Run seeded episodes with the given runner and aggregate the metrics.

    policy_runner(env, seed) must complete one episode and return its log.
    Bounding boxes come from the ground-truth id buffer recorded in the logs.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    logs = []
    for ep in range(episodes):
        env = env_factory()
        logs.append(policy_runner(env, seed + 7919 * ep))
    return report_from_logs(logs, lost_window)


def report_from_logs(logs, lost_window: int = DEFAULT_LOST_WINDOW) -> EvalReport:
    """Pure post-processing over stored logs; reusable as a replay oracle."""
    rows = []
    all_sizes = []
    all_devs = []
    for i, log in enumerate(logs):
        m = _episode_metrics(log, lost_window)
        all_sizes.extend(m.pop("sizes"))
        all_devs.extend(m.pop("deviations"))
        rows.append({"episode": i, **{k: m[k] for k in ("AR", "EL", "done_reason", "success")},
                     "lost_runs": m["lost_runs"]})
    ars = np.array([r["AR"] for r in rows], dtype=np.float64)
    els = np.array([r["EL"] for r in rows], dtype=np.float64)
    rec = recovery_stats(logs, lost_window)
    return EvalReport(
        episodes=len(logs),
        ar_mean=float(ars.mean()), ar_std=float(ars.std()),
        el_mean=float(els.mean()), el_std=float(els.std()),
        success_rate=sum(r["success"] for r in rows) / len(rows),
        target_size_mean=float(np.mean(all_sizes)) if all_sizes else 0.0,
        target_size_std=float(np.std(all_sizes)) if all_sizes else 0.0,
        deviation_mean=float(np.mean(all_devs)) if all_devs else 0.0,
        deviation_std=float(np.std(all_devs)) if all_devs else 0.0,
        recovery_latencies=rec["latencies"],
        rows=rows,
    )


def make_greedy_runner(params: NetworkParams):
    """Episode runner that follows the policy's greedy action."""
    space = params.cfg.action_space

    def run(env, seed):
        _, obs = env.reset(seed=seed)
        rec = RecurrentState.zeros(params.cfg.lstm_dim)
        while True:
            out = forward(params, obs.rgb, rec)
            rec = out.rec
            res = env.step(greedy_action(out, space))
            obs = res.observation
            if res.done:
                return env.log

    return run


def report_to_text(report: EvalReport) -> str:
    lines = [
        f"episodes        {report.episodes}",
        f"AR              {report.ar_mean:.2f} +/- {report.ar_std:.2f}",
        f"EL              {report.el_mean:.2f} +/- {report.el_std:.2f}",
        f"success_rate    {report.success_rate:.3f}",
        f"target_size     {report.target_size_mean:.4f} +/- {report.target_size_std:.4f}",
        f"deviation       {report.deviation_mean:+.4f} +/- {report.deviation_std:.4f}",
        f"recovery_events {len(report.recovery_latencies)}"
        + (f" (median {np.median(report.recovery_latencies):.0f} steps)"
           if report.recovery_latencies else ""),
    ]
    return "\n".join(lines)


def report_to_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(
            f, fieldnames=["episode", "AR", "EL", "done_reason", "success", "lost_runs"])
        writer.writeheader()
        for row in report.rows:
            out = dict(row)
            out["lost_runs"] = ";".join(f"{s}:{ln}" for s, ln in row["lost_runs"])
            writer.writerow(out)
