"""First-person column raycaster producing RGB frames plus a ground-truth ID buffer."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .textures import TexturePool
from .world import WorldSpec, WorldState

EYE_HEIGHT = 0.5  # camera z within unit-height walls
WALL_TEX_TILE = 1.0  # world units per horizontal texture repeat


@dataclass
class CameraConfig:
    width: int = 84
    height: int = 84
    fov: float = 1.57
    max_dist: float = 20.0
    shade_falloff: float = 0.12

    def validate(self) -> None:
        if self.width < 8 or self.height < 8:
            raise ValueError("camera needs width and height >= 8")
        if not (0.0 < self.fov < math.pi):
            raise ValueError("fov must lie in (0, pi)")


@dataclass
class Observation:
    rgb: np.ndarray  # (H, W, 3) float in [0, 1]
    id_buffer: np.ndarray  # (H, W) int16; 0 background, 1 target, 2+ distractors


@dataclass
class BBox:
    cx: float
    cy: float
    w: int
    h: int
    area_fraction: float


class WallGeometry:
    """Visible wall segments compiled to arrays; rebuild after editing a spec."""

    def __init__(self, spec: WorldSpec):
        walls = [w for w in spec.walls if w.visible]
        n = len(walls)
        self.p0 = np.array([w.p0 for w in walls], dtype=np.float64).reshape(n, 2)
        self.e = (
            np.array([w.p1 for w in walls], dtype=np.float64).reshape(n, 2) - self.p0
        )
        self.length = np.sqrt(self.e[:, 0] ** 2 + self.e[:, 1] ** 2)
        self.texture = np.array([w.texture for w in walls], dtype=np.int64)
        self.n = n


def _column_offsets(width: int, fov: float) -> np.ndarray:
    # integer numerators keep offsets exactly antisymmetric about the center
    numer = (2 * np.arange(width, dtype=np.int64) + 1 - width).astype(np.float64)
    return (numer / width) * math.tan(0.5 * fov)


def observe(spec: WorldSpec, state: WorldState, cam: CameraConfig,
            pool: TexturePool, geom: WallGeometry | None = None) -> Observation:
    """Render the tracker's first-person view. Pure function of its inputs."""
    if geom is None:
        geom = WallGeometry(spec)
    W, H = cam.width, cam.height
    c = math.cos(state.tracker.heading)
    s = math.sin(state.tracker.heading)
    pos = np.array([state.tracker.x, state.tracker.y])
    u = _column_offsets(W, cam.fov)
    dx = c + u * s
    dy = s + u * (-c)
    dotf = dx * c + dy * s  # forward component of each ray direction

    # ray/segment intersection over all (column, wall) pairs
    wall_depth = np.full(W, np.inf)
    hit_seg = np.full(W, -1, dtype=np.int64)
    hit_s = np.zeros(W)
    if geom.n:
        ex = geom.e[:, 0][None, :]
        ey = geom.e[:, 1][None, :]
        relx = (geom.p0[:, 0] - pos[0])[None, :]
        rely = (geom.p0[:, 1] - pos[1])[None, :]
        denom = dx[:, None] * ey - dy[:, None] * ex
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (relx * ey - rely * ex) / denom
            sp = (relx * dy[:, None] - rely * dx[:, None]) / denom
        depth = t * dotf[:, None]
        valid = (
            (np.abs(denom) > 1e-12)
            & (t > 1e-9)
            & (sp >= 0.0)
            & (sp <= 1.0)
            & (depth <= cam.max_dist)
        )
        t_masked = np.where(valid, t, np.inf)
        idx = np.argmin(t_masked, axis=1)
        cols = np.arange(W)
        chosen = t_masked[cols, idx]
        has = np.isfinite(chosen)
        hit_seg[has] = idx[has]
        hit_s[has] = sp[cols, idx][has]
        wall_depth[has] = depth[cols, idx][has]

    proj = H / (2.0 * math.tan(0.5 * cam.fov))
    rows = np.arange(H, dtype=np.float64)[:, None] + 0.5
    tint = np.asarray(spec.light.tint, dtype=np.float64)
    ambient = spec.light.intensity

    with np.errstate(divide="ignore", invalid="ignore"):
        half = np.where(np.isfinite(wall_depth), (EYE_HEIGHT * proj) / wall_depth, 0.0)
    y_top = H / 2.0 - half
    y_bot = H / 2.0 + half

    rgb = np.empty((H, W, 3))
    ceil_color = pool.means[spec.ceiling_texture] * ambient * tint
    floor_color = pool.means[spec.floor_texture] * ambient * tint
    above = rows < y_top[None, :]
    below = rows >= y_bot[None, :]
    rgb[:] = np.where(above[:, :, None], ceil_color, floor_color)

    shade = (ambient / (1.0 + cam.shade_falloff * wall_depth))[:, None] * tint[None, :]
    wall_rows = ~above & ~below & (hit_seg >= 0)[None, :]
    if wall_rows.any():
        with np.errstate(divide="ignore", invalid="ignore"):
            v = (rows - y_top[None, :]) / (y_bot[None, :] - y_top[None, :])
        v = np.where(np.isfinite(v), v, 0.0)
        u_world = hit_s * geom.length[hit_seg]
        u_frac = u_world / WALL_TEX_TILE
        u_frac = u_frac - np.floor(u_frac)
        texids = geom.texture[hit_seg]
        for tid in np.unique(texids[hit_seg >= 0]):
            tex = pool.textures[tid]
            th, tw = tex.shape[:2]
            colmask = (texids == tid) & (hit_seg >= 0)
            m = wall_rows & colmask[None, :]
            if not m.any():
                continue
            tc = np.minimum((u_frac * tw).astype(np.int64), tw - 1)
            trow = np.clip((v * th).astype(np.int64), 0, th - 1)
            sample = tex[trow, tc[None, :]] * shade[None, :, :]
            rgb = np.where(m[:, :, None], sample, rgb)

    id_buffer = np.zeros((H, W), dtype=np.int16)

    # billboard sprites: target id 1, distractors 2+; far to near
    sprites = []
    if spec.target is not None:
        sprites.append((1, state.target, spec.target.radius,
                        spec.target.appearance, spec.target.mirrored))
    for i, d in enumerate(spec.distractors):
        p = state.distractors[i] if i < len(state.distractors) else d.pose
        sprites.append((2 + i, p, d.radius, d.appearance, d.mirrored))

    vis = []
    for ent_id, p, radius, appearance, mirrored in sprites:
        ddx = p.x - state.tracker.x
        ddy = p.y - state.tracker.y
        dep = ddx * c + ddy * s
        lat = ddx * s - ddy * c
        if dep > 1e-9 and dep <= cam.max_dist:
            vis.append((dep, ent_id, lat, radius, appearance, mirrored))
    vis.sort(key=lambda q: -q[0])

    for dep, ent_id, lat, radius, appearance, mirrored in vis:
        lo = (lat - radius) / dep
        hi = (lat + radius) / dep
        cover = (u >= lo) & (u <= hi) & (dep < wall_depth)
        if not cover.any():
            continue
        height = min(0.95, 2.5 * radius)
        top = H / 2.0 - ((height - EYE_HEIGHT) * proj) / dep
        bot = H / 2.0 + (EYE_HEIGHT * proj) / dep
        vv = (rows[:, 0] - top) / (bot - top)
        rowmask = (vv >= 0.0) & (vv < 1.0)
        if not rowmask.any():
            continue
        tex = pool.textures[appearance]
        th, tw = tex.shape[:2]
        if mirrored:
            sh = (hi - u) / (hi - lo)
        else:
            sh = (u - lo) / (hi - lo)
        tc = np.clip((sh * tw).astype(np.int64), 0, tw - 1)
        trow = np.clip((vv * th).astype(np.int64), 0, th - 1)
        sprite_shade = (ambient / (1.0 + cam.shade_falloff * dep)) * tint
        mask = rowmask[:, None] & cover[None, :]
        sample = tex[trow[:, None], tc[None, :]] * sprite_shade
        rgb = np.where(mask[:, :, None], sample, rgb)
        id_buffer[mask] = ent_id

    return Observation(rgb=np.clip(rgb, 0.0, 1.0), id_buffer=id_buffer)


def target_bbox(obs: Observation) -> BBox | None:
    """Tight bounding box of target pixels, or None when the target is not visible."""
    rows, cols = np.nonzero(obs.id_buffer == 1)
    if rows.size == 0:
        return None
    r0, r1 = int(rows.min()), int(rows.max())
    c0, c1 = int(cols.min()), int(cols.max())
    w = c1 - c0 + 1
    h = r1 - r0 + 1
    hh, ww = obs.id_buffer.shape
    return BBox(cx=(c0 + c1) / 2.0, cy=(r0 + r1) / 2.0, w=w, h=h,
                area_fraction=(w * h) / (ww * hh))
