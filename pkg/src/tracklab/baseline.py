"""Simulated active tracker baseline: mean-shift color tracking plus a
proportional camera controller emitting discrete actions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .actionmap import D6_NAMES, DISCRETE6, Action
from .render import target_bbox

BINS = 8
MAX_ITERS = 20
SHIFT_STOP = 1.0  # px
LOST_RESPONSE = 0.05
MIN_WINDOW = 3.0


class DegenerateBox(Exception):
    pass


@dataclass
class PassiveTrackerState:
    hist: np.ndarray  # (BINS, BINS, BINS), sums to 1
    window: tuple[float, float, float, float]  # cx, cy, w, h in pixels
    initialized: bool = True


@dataclass
class CameraController:
    k_turn: float = 1.0
    k_forward: float = 1.0
    dead_zone_px: float = 2.0
    area_band: tuple[float, float] = (0.01, 0.25)
    reference_area: float = 0.05

    def validate(self) -> None:
        if self.k_turn < 0 or self.k_forward < 0:
            raise ValueError("controller gains must be >= 0")
        if not (self.area_band[0] < self.area_band[1]):
            raise ValueError("area band must satisfy a_lo < a_hi")


def _bin_indices(frame: np.ndarray) -> np.ndarray:
    return np.minimum((frame * BINS).astype(np.int64), BINS - 1)


def _window_slice(window, shape):
    cx, cy, w, h = window
    H, W = shape
    x0 = max(0, int(round(cx - w / 2)))
    x1 = min(W, int(round(cx + w / 2)) + 1)
    y0 = max(0, int(round(cy - h / 2)))
    y1 = min(H, int(round(cy + h / 2)) + 1)
    return x0, x1, y0, y1


def init_tracker(frame: np.ndarray, bbox) -> PassiveTrackerState:
    """Build the reference histogram from the given box (cx, cy, w, h)."""
    cx, cy, w, h = bbox
    if w < 1 or h < 1:
        raise DegenerateBox(f"zero-area box {bbox}")
    x0, x1, y0, y1 = _window_slice((cx, cy, w, h), frame.shape[:2])
    if x1 <= x0 or y1 <= y0:
        raise DegenerateBox(f"box {bbox} outside the frame")
    patch = _bin_indices(frame[y0:y1, x0:x1])
    hist = np.zeros((BINS, BINS, BINS))
    np.add.at(hist, (patch[:, :, 0].ravel(), patch[:, :, 1].ravel(),
                     patch[:, :, 2].ravel()), 1.0)
    hist /= hist.sum()
    return PassiveTrackerState(hist=hist, window=(float(cx), float(cy), float(w), float(h)))


def back_projection(frame: np.ndarray, hist: np.ndarray) -> np.ndarray:
    """Per-pixel histogram response, scaled so a peak bin maps to 1."""
    idx = _bin_indices(frame)
    resp = hist[idx[:, :, 0], idx[:, :, 1], idx[:, :, 2]]
    peak = hist.max()
    return resp / peak if peak > 0 else resp


def track(state: PassiveTrackerState, frame: np.ndarray):
    """Mean-shift the window onto the back-projection; returns (state, bbox|None)."""
    resp = back_projection(frame, state.hist)
    H, W = resp.shape
    cx, cy, w, h = state.window
    mass = 0.0
    for _ in range(MAX_ITERS):
        x0, x1, y0, y1 = _window_slice((cx, cy, w, h), (H, W))
        win = resp[y0:y1, x0:x1]
        mass = float(win.sum())
        if mass <= 1e-9:
            return state, None
        ys, xs = np.mgrid[y0:y1, x0:x1]
        nx = float((win * xs).sum() / mass)
        ny = float((win * ys).sum() / mass)
        shift = math.hypot(nx - cx, ny - cy)
        cx, cy = nx, ny
        if shift < SHIFT_STOP:
            break
    x0, x1, y0, y1 = _window_slice((cx, cy, w, h), (H, W))
    win = resp[y0:y1, x0:x1]
    if win.size == 0 or float(win.max()) < LOST_RESPONSE:
        return state, None
    # scale from back-projection mass: a fully matching pixel contributes ~1
    target_area = max(float(win.sum()), 1.0)
    aspect = w / h if h > 0 else 1.0
    est_h = math.sqrt(target_area / aspect)
    est_w = aspect * est_h
    w = min(W, max(MIN_WINDOW, 0.8 * w + 0.2 * est_w))
    h = min(H, max(MIN_WINDOW, 0.8 * h + 0.2 * est_h))
    cx = min(max(cx, 0.0), W - 1.0)
    cy = min(max(cy, 0.0), H - 1.0)
    new_state = PassiveTrackerState(hist=state.hist, window=(cx, cy, w, h))
    return new_state, (cx, cy, w, h)


def control(bbox, controller: CameraController, frame_dims, last_error: float = 0.0) -> Action:
    """Map a bounding box (or a lost target) to one of the six discrete actions."""
    W, H = frame_dims
    center = (W - 1) / 2.0
    if bbox is None:
        name = "turn-right" if last_error > 0 else "turn-left"
        return Action(space=DISCRETE6, index=D6_NAMES.index(name))
    cx, cy, w, h = bbox
    e = cx - center
    area = (w * h) / (W * H)
    turn = 0
    if abs(e) * controller.k_turn > controller.dead_zone_px:
        turn = 1 if e > 0 else -1
    forward = controller.k_forward > 0 and area < controller.area_band[0]
    if turn == 0 and not forward:
        name = "no-op"
    elif turn == 0:
        name = "move-forward"
    elif forward:
        name = "turn-right-and-move-forward" if turn > 0 else "turn-left-and-move-forward"
    else:
        name = "turn-right" if turn > 0 else "turn-left"
    return Action(space=DISCRETE6, index=D6_NAMES.index(name))


def run_episode(env, controller: CameraController, seed: int | None = None):
    """Drive one episode with the passive tracker + controller; returns the log.

    The first-frame ground-truth box stands in for the manual initialization.
    """
    _, obs = env.reset(seed=seed)
    W, H = env.cam.width, env.cam.height
    bb0 = target_bbox(obs)
    state = None
    if bb0 is not None:
        state = init_tracker(obs.rgb, (bb0.cx, bb0.cy, bb0.w, bb0.h))
    last_e = 0.0
    bbox = None
    while True:
        if state is not None:
            state, bbox = track(state, obs.rgb)
        action = control(bbox, controller, (W, H), last_e)
        if bbox is not None:
            last_e = bbox[0] - (W - 1) / 2.0
        res = env.step(action)
        obs = res.observation
        if res.done:
            return env.log
