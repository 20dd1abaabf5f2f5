"""Asynchronous advantage actor-critic: rollouts, shared-Adam updates, workers."""

from __future__ import annotations

import json
import os
import threading
import traceback
from dataclasses import dataclass, field

import numpy as np

from .net import (
    NetworkParams,
    RecurrentState,
    backward,
    forward,
    greedy_action,
    loss_from_outputs,
    sample_action,
    save_checkpoint,
)

ADAM_B1 = 0.9
ADAM_B2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4  # initial rate; see lr_anneal
    entropy_beta: float = 0.01
    gamma: float = 0.99
    n_step: int = 20
    worker_count: int = 1
    max_global_steps: int = 100_000_000
    validation_interval: int = 100_000
    validation_episodes: int = 4
    clip_norm: float | None = None  # optional gradient-norm clip (paper-adjacent 40)
    lr_anneal: bool = True  # decay the rate linearly to 0 over max_global_steps
    seed: int = 0

    def validate(self) -> None:
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must lie in (0, 1]")
        if self.n_step < 1 or self.worker_count < 1:
            raise ValueError("n_step and worker_count must be >= 1")


@dataclass
class RolloutBatch:
    obs: np.ndarray  # (T, H, W, C)
    rec0: RecurrentState
    actions: list
    rewards: np.ndarray
    values: np.ndarray
    bootstrap: float
    returns: np.ndarray = field(default=None)
    advantages: np.ndarray = field(default=None)


def compute_returns_advantages(rewards, values, gamma: float, bootstrap: float):
    """n-step discounted returns (bootstrap folded in) and advantages R - V."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    returns = np.empty_like(rewards)
    acc = bootstrap
    for k in range(len(rewards) - 1, -1, -1):
        acc = rewards[k] + gamma * acc
        returns[k] = acc
    return returns, returns - values


def loss(outputs, actions, advantages, returns, beta: float):
    """A3C loss on given policy outputs; advantages are constants here."""
    return loss_from_outputs(outputs, actions, advantages, returns, beta)


class SharedParams:
    """Authoritative parameters plus shared Adam statistics and the step counter.

    Tensor updates are applied without locks (workers may interleave at tensor
    granularity); the counters and best-checkpoint bookkeeping use a small lock.
    """

    def __init__(self, params: NetworkParams):
        self.params = params
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0
        self.global_step = 0
        self.steps_by_worker: dict[int, int] = {}
        self.best_ar: float | None = None
        self.lock = threading.Lock()

    def snapshot(self) -> NetworkParams:
        return self.params.copy()

    def add_steps(self, worker: int, n: int) -> int:
        with self.lock:
            self.global_step += n
            self.steps_by_worker[worker] = self.steps_by_worker.get(worker, 0) + n
            return self.global_step

    def apply_gradients(self, grads: dict, lr: float, clip_norm: float | None = None):
        if clip_norm is not None:
            total = 0.0
            for g in grads.values():
                total += float((g * g).sum())
            norm = total ** 0.5
            if norm > clip_norm:
                scale = clip_norm / norm
                grads = {k: g * scale for k, g in grads.items()}
        with self.lock:
            self.t += 1
            t = self.t
        b1c = 1.0 - ADAM_B1 ** t
        b2c = 1.0 - ADAM_B2 ** t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= ADAM_B1
            m += (1.0 - ADAM_B1) * g
            v *= ADAM_B2
            v += (1.0 - ADAM_B2) * g * g
            self.params.tensors[k] -= lr * (m / b1c) / (np.sqrt(v / b2c) + ADAM_EPS)


def validate(params: NetworkParams, env, episodes: int, seed: int = 0):
    """Greedy evaluation; returns mean AR / mean EL without touching params."""
    ars = []
    els = []
    space = params.cfg.action_space
    for ep in range(episodes):
        _, obs = env.reset(seed=seed + 1000 * ep)
        rec = RecurrentState.zeros(params.cfg.lstm_dim)
        while True:
            out = forward(params, obs.rgb, rec)
            rec = out.rec
            res = env.step(greedy_action(out, space))
            obs = res.observation
            if res.done:
                break
        ars.append(env.log.summary["AR"])
        els.append(env.log.summary["EL"])
    return {"mean_AR": float(np.mean(ars)), "mean_EL": float(np.mean(els))}


class _TrainState:
    def __init__(self, shared, cfg, out_dir, validation_env_factory, verbose=False):
        self.shared = shared
        self.cfg = cfg
        self.out_dir = out_dir
        self.validation_env_factory = validation_env_factory
        self.verbose = verbose
        self.stop = threading.Event()
        self.errors: list[str] = []
        self.log_lock = threading.Lock()
        self.log_records: list[dict] = []
        self.next_validation = cfg.validation_interval
        self.validation_history: list[dict] = []

    def log(self, rec: dict):
        with self.log_lock:
            self.log_records.append(rec)


def worker_loop(worker_id: int, shared: SharedParams, env_factory, cfg: TrainConfig,
                state: _TrainState, resume_cfg=None, base_spec=None):
    """Collect n-step rollouts with stochastic actions and push gradient updates."""
    try:
        env = env_factory(worker_id)
        rng = np.random.default_rng([cfg.seed, worker_id])
        space = env.cfg.action_space
        lstm_dim = None
        rec = None
        obs = None
        done = True
        last_log = None
        episode_steps = 0
        while not state.stop.is_set() and shared.global_step < cfg.max_global_steps:
            if done:
                start = None
                if resume_cfg is not None and resume_cfg.resume_from_failure:
                    from .augment import next_start
                    start = next_start(last_log, resume_cfg, base_spec or env.base_spec)
                _, obs0 = env.reset(tracker_start=start)
                obs = obs0
                done = False
                episode_steps = 0
            snap = shared.snapshot()
            if lstm_dim is None:
                lstm_dim = snap.cfg.lstm_dim
            if episode_steps == 0:
                rec = RecurrentState.zeros(lstm_dim)
            rec0 = RecurrentState(h=rec.h.copy(), c=rec.c.copy())
            frames = []
            actions = []
            rewards = []
            values = []
            for _ in range(cfg.n_step):
                out = forward(snap, obs.rgb, rec)
                action = sample_action(out, rng, space)
                res = env.step(action)
                frames.append(obs.rgb)
                actions.append(action)
                rewards.append(res.reward)
                values.append(out.value)
                rec = out.rec
                obs = res.observation
                episode_steps += 1
                if res.done:
                    done = True
                    break
            if done:
                bootstrap = 0.0
                last_log = env.log
            else:
                bootstrap = forward(snap, obs.rgb, rec).value
            batch = RolloutBatch(obs=np.stack(frames), rec0=rec0, actions=actions,
                                 rewards=np.array(rewards), values=np.array(values),
                                 bootstrap=bootstrap)
            batch.returns, batch.advantages = compute_returns_advantages(
                batch.rewards, batch.values, cfg.gamma, bootstrap)
            grads, total, comps, _ = backward(
                snap, batch.obs, batch.actions, batch.advantages, batch.returns,
                batch.rec0, cfg.entropy_beta)
            lr = cfg.learning_rate
            if cfg.lr_anneal:
                lr *= max(0.0, 1.0 - shared.global_step / cfg.max_global_steps)
            shared.apply_gradients(grads, lr, cfg.clip_norm)
            gstep = shared.add_steps(worker_id, len(frames))
            rec_entry = {"global_step": gstep, "worker": worker_id,
                         "loss": round(total, 10),
                         "policy": round(comps["policy"], 10),
                         "entropy": round(comps["entropy"], 10),
                         "value": round(comps["value"], 10)}
            if done:
                rec_entry["episode_AR"] = round(env.log.summary["AR"], 10)
                rec_entry["episode_EL"] = env.log.summary["EL"]
                rec_entry["done_reason"] = env.log.summary["done_reason"]
            state.log(rec_entry)
            _maybe_validate(shared, cfg, state, gstep)
    except Exception:
        state.errors.append(f"worker {worker_id}:\n{traceback.format_exc()}")
        state.stop.set()


def _maybe_validate(shared: SharedParams, cfg: TrainConfig, state: _TrainState, gstep: int):
    if state.validation_env_factory is None or cfg.validation_interval <= 0:
        return
    run = False
    with shared.lock:
        if gstep >= state.next_validation:
            state.next_validation += cfg.validation_interval
            run = True
    if not run:
        return
    params = shared.snapshot()
    env = state.validation_env_factory()
    result = validate(params, env, cfg.validation_episodes, seed=cfg.seed + 999)
    entry = {"global_step": gstep, **result}
    is_best = shared.best_ar is None or result["mean_AR"] > shared.best_ar
    if is_best:
        shared.best_ar = result["mean_AR"]
        entry["best"] = True
        if state.out_dir is not None:
            save_checkpoint(params, os.path.join(state.out_dir, "best.ckpt"),
                            meta={"global_step": gstep, "mean_AR": result["mean_AR"],
                                  "mean_EL": result["mean_EL"]})
    state.validation_history.append(entry)
    state.log({"validation": entry})
    if state.verbose:
        star = " *" if is_best else ""
        print(f"  step {gstep}: validation AR={result['mean_AR']:.1f} "
              f"EL={result['mean_EL']:.1f}{star}", flush=True)


def train(initial: NetworkParams, env_factory, cfg: TrainConfig, out_dir=None,
          validation_env_factory=None, resume_cfg=None, base_spec=None,
          verbose: bool = False):
    """Run A3C training to the step budget; returns (shared, state, summary)."""
    cfg.validate()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    shared = SharedParams(initial)
    state = _TrainState(shared, cfg, out_dir, validation_env_factory, verbose=verbose)
    workers = [
        threading.Thread(target=worker_loop, name=f"worker-{i}",
                         args=(i, shared, env_factory, cfg, state, resume_cfg, base_spec))
        for i in range(cfg.worker_count)
    ]
    for w in workers:
        w.start()
    for w in workers:
        w.join()
    if state.errors:
        raise RuntimeError("worker failure:\n" + "\n".join(state.errors))
    if out_dir is not None:
        with open(os.path.join(out_dir, "train_log.jsonl"), "w") as f:
            f.write(json.dumps({"train_log_version": 1, "seed": cfg.seed,
                                "worker_count": cfg.worker_count}) + "\n")
            for rec in state.log_records:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
        save_checkpoint(shared.params, os.path.join(out_dir, "latest.ckpt"),
                        meta={"global_step": shared.global_step})
        if shared.best_ar is None:
            save_checkpoint(shared.params, os.path.join(out_dir, "best.ckpt"),
                            meta={"global_step": shared.global_step})
    summary = {
        "global_step": shared.global_step,
        "steps_by_worker": dict(shared.steps_by_worker),
        "updates": shared.t,
        "best_AR": shared.best_ar,
        "validations": state.validation_history,
    }
    return shared, state, summary
