"""Command-line front end: train, eval, replay, saliency, bench-baseline, export-actions."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .a3c import train
from .actionmap import StepKinematics, export_command_stream
from .augment import build_pool, make_episode_randomizer
from .baseline import CameraController, run_episode
from .config import ConfigError, RunConfig, dump_config, load_config
from .env import TrackingEnv, action_from_dict, read_episode_log, replay_episode, write_episode_log
from .evalkit import evaluate, make_greedy_runner, report_to_csv, report_to_text
from .net import RecurrentState, forward, init_params, load_checkpoint, saliency
from .render import CameraConfig
from .scenarios import SCENARIOS, build_scenario
from .textures import TexturePool, write_ppm
from .world import validate_spec

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

# controller gains hand-tuned on the standard scenario, then frozen
DEFAULT_CONTROLLER = CameraController(k_turn=1.0, k_forward=1.0, dead_zone_px=1.5,
                                      area_band=(0.015, 0.15), reference_area=0.04)


def _textures(cfg: RunConfig) -> TexturePool:
    if cfg.augment.texture_pool_path:
        return TexturePool.from_dir(cfg.augment.texture_pool_path)
    return TexturePool.default()


def make_env_factory(cfg: RunConfig, spec, textures, pool=None, randomizer=None,
                     seed_offset=0):
    def factory(worker_id: int = 0):
        return TrackingEnv(
            spec, cfg.camera, cfg.reward, cfg.episode, textures, pool=pool,
            episode_randomizer=randomizer, kinematics=cfg.kinematics,
            seed=cfg.seed * 10007 + seed_offset + worker_id * 101)
    return factory


def prepare_training(cfg: RunConfig):
    """Scenario spec, texture pool, augmented env pool, and both env factories."""
    textures = _textures(cfg)
    spec = build_scenario(cfg.scenario, target_speed=cfg.target_speed)
    validate_spec(spec, n_textures=len(textures))
    pool = build_pool(spec, cfg.augment, seed=cfg.seed) if cfg.use_pool else None
    advanced = (cfg.augment.hide_background_probability > 0
                or cfg.augment.randomize_textures or cfg.augment.randomize_goal)
    randomizer = make_episode_randomizer(cfg.augment, textures) if advanced else None
    env_factory = make_env_factory(cfg, spec, textures, pool, randomizer)
    validation_factory = make_env_factory(cfg, spec, textures, seed_offset=7)
    return spec, textures, pool, env_factory, validation_factory


def cmd_train(args) -> int:
    cfg = _load(args)
    os.makedirs(cfg.out, exist_ok=True)
    _, _, pool, env_factory, validation_factory = prepare_training(cfg)
    with open(os.path.join(cfg.out, "config.json"), "w") as f:
        json.dump(dump_config(cfg), f, indent=1, sort_keys=True)
    params = init_params(cfg.net, seed=cfg.seed)
    print(f"training scenario={cfg.scenario} preset={cfg.preset} "
          f"pool={'none' if pool is None else len(pool)} "
          f"budget={cfg.train.max_global_steps} workers={cfg.train.worker_count}")
    shared, state, summary = train(
        params, env_factory, cfg.train, out_dir=cfg.out,
        validation_env_factory=lambda: validation_factory(0),
        resume_cfg=cfg.augment if cfg.augment.resume_from_failure else None,
        verbose=True)
    with open(os.path.join(cfg.out, "summary.json"), "w") as f:
        json.dump({"summary_version": 1, **summary}, f, indent=1, sort_keys=True)
    print(f"done: steps={summary['global_step']} updates={summary['updates']} "
          f"best_AR={summary['best_AR']}")
    return EXIT_OK


def _eval_common(args, runner, tag: str) -> int:
    cfg = _load(args)
    out = args.out or cfg.out
    os.makedirs(out, exist_ok=True)
    episodes_dir = os.path.join(out, "episodes")
    os.makedirs(episodes_dir, exist_ok=True)
    textures = _textures(cfg)
    spec = build_scenario(args.scenario or cfg.scenario, target_speed=cfg.target_speed)
    pool = None
    if getattr(args, "perturbed", False):
        pool = build_pool(spec, cfg.augment, seed=cfg.seed + 555)
    factory = make_env_factory(cfg, spec, textures, pool=pool, seed_offset=31)

    saved = []

    def saving_runner(env, seed):
        log = runner(env, seed)
        path = os.path.join(episodes_dir, f"ep{len(saved):03d}.jsonl")
        write_episode_log(log, path)
        saved.append(path)
        return log

    report = evaluate(saving_runner, factory, episodes=args.episodes, seed=cfg.seed)
    text = report_to_text(report)
    print(f"[{tag}] scenario={args.scenario or cfg.scenario}")
    print(text)
    with open(os.path.join(out, "report.txt"), "w") as f:
        f.write(text + "\n")
    report_to_csv(report, os.path.join(out, "report.csv"))
    with open(os.path.join(out, "report.json"), "w") as f:
        json.dump({"eval_report_version": 1, "kind": tag,
                   "episodes": report.episodes,
                   "AR": [report.ar_mean, report.ar_std],
                   "EL": [report.el_mean, report.el_std],
                   "success_rate": report.success_rate,
                   "target_size": [report.target_size_mean, report.target_size_std],
                   "deviation": [report.deviation_mean, report.deviation_std],
                   "recovery_latencies": report.recovery_latencies},
                  f, indent=1, sort_keys=True)
    return EXIT_OK


def cmd_eval(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    return _eval_common(args, make_greedy_runner(params), "eval")


def cmd_bench_baseline(args) -> int:
    def runner(env, seed):
        return run_episode(env, DEFAULT_CONTROLLER, seed=seed)

    return _eval_common(args, runner, "baseline")


def cmd_replay(args) -> int:
    log = read_episode_log(args.log)
    cam_dims = log.header.get("camera", {})
    cam = CameraConfig(width=cam_dims.get("width", 84), height=cam_dims.get("height", 84))
    textures = TexturePool.default()
    os.makedirs(args.out, exist_ok=True)
    n = 0
    for step, obs in replay_episode(log, cam, textures):
        write_ppm(os.path.join(args.out, f"frame{step:05d}.ppm"), obs.rgb)
        n += 1
    print(f"wrote {n} frames to {args.out}")
    return EXIT_OK


def cmd_saliency(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    log = read_episode_log(args.log)
    cam_dims = log.header.get("camera", {})
    cam = CameraConfig(width=cam_dims.get("width", params.cfg.width),
                       height=cam_dims.get("height", params.cfg.height))
    textures = TexturePool.default()
    os.makedirs(args.out, exist_ok=True)
    lo, hi = args.start, args.stop
    rec = RecurrentState.zeros(params.cfg.lstm_dim)
    n = 0
    for (step, obs), rec_step in _walk_with_rec(log, cam, textures, params):
        rec = rec_step
        if step < lo or (hi is not None and step >= hi):
            continue
        if step == 0 or step - 1 >= len(log.steps):
            continue
        action = action_from_dict(log.steps[step - 1]["action"])
        m = saliency(params, obs.rgb, rec, action)
        overlay = obs.rgb * 0.35
        overlay[:, :, 0] = np.maximum(overlay[:, :, 0], m)
        write_ppm(os.path.join(args.out, f"saliency{step:05d}.ppm"), overlay)
        n += 1
    print(f"wrote {n} saliency overlays to {args.out}")
    return EXIT_OK


def _walk_with_rec(log, cam, textures, params):
    """Replay frames while evolving the recurrent state the policy would carry."""
    rec = RecurrentState.zeros(params.cfg.lstm_dim)
    for step, obs in replay_episode(log, cam, textures):
        yield (step, obs), rec
        out = forward(params, obs.rgb, rec)
        rec = out.rec


def cmd_export_actions(args) -> int:
    log = read_episode_log(args.log)
    actions = [action_from_dict(s["action"]) for s in log.steps]
    n = export_command_stream(actions, args.out)
    print(f"wrote {n} velocity commands to {args.out}")
    return EXIT_OK


def _load(args) -> RunConfig:
    overrides = {}
    for key in ("seed", "out", "scenario"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return load_config(getattr(args, "config", None),
                       preset=getattr(args, "preset", None), overrides=overrides)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_flags(p, checkpoint=False, episodes=False):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", choices=["paper", "desk"], help="base preset")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--scenario", choices=list(SCENARIOS))
    if checkpoint:
        p.add_argument("--checkpoint", required=True)
    if episodes:
        p.add_argument("--episodes", type=int, default=10)


def build_parser() -> _Parser:
    parser = _Parser(prog="tracklab",
                     description="active tracking laboratory: train and evaluate "
                                 "a pixel-to-action tracker in a raycast world")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the tracker with A3C")
    _common_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a scenario")
    _common_flags(p, checkpoint=True, episodes=True)
    p.add_argument("--perturbed", action="store_true",
                   help="evaluate on a perturbed-start pool instead of the base map")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench-baseline", help="run the mean-shift + controller baseline")
    _common_flags(p, episodes=True)
    p.set_defaults(fn=cmd_bench_baseline)

    p = sub.add_parser("replay", help="render an episode log to PPM frames")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("saliency", help="write saliency overlays for logged steps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--start", type=int, default=1)
    p.add_argument("--stop", type=int, default=None)
    p.set_defaults(fn=cmd_saliency)

    p = sub.add_parser("export-actions", help="emit the 20 Hz real-velocity command stream")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export_actions)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001 - report and signal runtime failure
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
