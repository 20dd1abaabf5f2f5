"""Planar world model: map geometry, entity poses, kinematics, target scripting."""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace

MAP_VERSION = 1


class NoPath(Exception):
    """Goal unreachable on the occupancy grid."""


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.remainder(a, math.tau)
    if a <= -math.pi:
        a += math.tau
    return a


@dataclass
class Pose:
    x: float
    y: float
    heading: float  # radians in (-pi, pi], 0 along +X, CCW positive

    def normalized(self) -> "Pose":
        return Pose(self.x, self.y, normalize_angle(self.heading))


@dataclass
class RelativePose:
    """Target expressed in the tracker-centric frame: x rightward, y forward."""

    x: float
    y: float
    omega: float


@dataclass
class TrajectoryScript:
    waypoints: list[tuple[float, float]]
    speed: float
    zigzag_amplitude: float = 0.0  # signed; mirrored worlds carry the negated value
    zigzag_period: int = 40
    loop: bool = True


@dataclass
class TargetSpec:
    initial: Pose
    trajectory: TrajectoryScript
    appearance: int = 0
    radius: float = 0.3
    mirrored: bool = False  # sprite texture sampled right-to-left when set


@dataclass
class Distractor:
    pose: Pose
    appearance: int = 0
    static: bool = True
    radius: float = 0.3
    mirrored: bool = False


@dataclass
class Wall:
    p0: tuple[float, float]
    p1: tuple[float, float]
    texture: int = 0
    background: bool = False  # background objects may be hidden by augmentation
    visible: bool = True


@dataclass
class Light:
    intensity: float = 0.8
    tint: tuple[float, float, float] = (1.0, 1.0, 1.0)


@dataclass
class WorldSpec:
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    walls: list[Wall]
    floor_texture: int = 0
    ceiling_texture: int = 0
    light: Light = field(default_factory=Light)
    target: TargetSpec | None = None
    distractors: list[Distractor] = field(default_factory=list)
    tracker_start: Pose = field(default_factory=lambda: Pose(0.0, 0.0, 0.0))
    tracker_radius: float = 0.25
    map_version: int = MAP_VERSION


@dataclass
class WorldState:
    tracker: Pose
    target: Pose
    target_progress: float = 0.0
    distractors: list[Pose] = field(default_factory=list)
    step_count: int = 0
    rng: object | None = None  # reserved; stepping itself is deterministic


def relative_pose(tracker: Pose, target: Pose) -> RelativePose:
    """Coordinates of target in the tracker frame (x right, y forward)."""
    dx = target.x - tracker.x
    dy = target.y - tracker.y
    c = math.cos(tracker.heading)
    s = math.sin(tracker.heading)
    return RelativePose(
        x=dx * s - dy * c,
        y=dx * c + dy * s,
        omega=normalize_angle(target.heading - tracker.heading),
    )


# ---------------------------------------------------------------------------
# geometry primitives

def _point_segment_distance(px, py, ax, ay, bx, by):
    ex = bx - ax
    ey = by - ay
    ln2 = ex * ex + ey * ey
    if ln2 <= 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * ex + (py - ay) * ey) / ln2
    t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    return math.hypot(px - (ax + t * ex), py - (ay + t * ey))


def _segments_intersect(p1, p2, p3, p4):
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    o1 = orient(p1, p2, p3)
    o2 = orient(p1, p2, p4)
    o3 = orient(p3, p4, p1)
    o4 = orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    return False


def segment_segment_distance(a0, a1, b0, b1) -> float:
    if _segments_intersect(a0, a1, b0, b1):
        return 0.0
    return min(
        _point_segment_distance(a0[0], a0[1], b0[0], b0[1], b1[0], b1[1]),
        _point_segment_distance(a1[0], a1[1], b0[0], b0[1], b1[0], b1[1]),
        _point_segment_distance(b0[0], b0[1], a0[0], a0[1], a1[0], a1[1]),
        _point_segment_distance(b1[0], b1[1], a0[0], a0[1], a1[0], a1[1]),
    )


def boundary_segments(bounds) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    xmin, ymin, xmax, ymax = bounds
    return [
        ((xmin, ymin), (xmax, ymin)),
        ((xmax, ymin), (xmax, ymax)),
        ((xmax, ymax), (xmin, ymax)),
        ((xmin, ymax), (xmin, ymin)),
    ]


def collision_segments(spec: WorldSpec):
    """Wall segments plus the map boundary; hidden walls still collide."""
    segs = [(w.p0, w.p1) for w in spec.walls]
    segs.extend(boundary_segments(spec.bounds))
    return segs


def clearance(spec: WorldSpec, x: float, y: float) -> float:
    """Distance from a point to the nearest wall or boundary edge."""
    best = math.inf
    for a, b in collision_segments(spec):
        d = _point_segment_distance(x, y, a[0], a[1], b[0], b[1])
        if d < best:
            best = d
    xmin, ymin, xmax, ymax = spec.bounds
    inside = xmin <= x <= xmax and ymin <= y <= ymax
    return best if inside else -best


def segment_clearance(spec: WorldSpec, a, b) -> float:
    best = math.inf
    for s0, s1 in collision_segments(spec):
        d = segment_segment_distance(a, b, s0, s1)
        if d < best:
            best = d
    return best


def _sweep_hit_t(px, py, ux, uy, ax, ay, bx, by, r):
    """Earliest t in [0,1] where a circle of radius r moving p + t*u touches segment ab.

    Returns math.inf when the sweep stays clear. All arithmetic is built from
    dot products (mirror-invariant) and cross products (mirror-negating), so
    results are bitwise identical for a world reflected across the x-axis.
    """
    best = math.inf
    ex = bx - ax
    ey = by - ay
    ln2 = ex * ex + ey * ey
    if ln2 > 0.0:
        # side of the infinite line: cross(e, p - a) / |e|
        ln = math.sqrt(ln2)
        s0 = (ex * (py - ay) - ey * (px - ax)) / ln
        su = (ex * uy - ey * ux) / ln
        for target in (r, -r):
            if su != 0.0:
                t = (target - s0) / su
                if -1e-12 <= t <= 1.0 and abs(s0 + t * su) <= r + 1e-9:
                    # projection onto the segment must land within it
                    qx = px + t * ux - ax
                    qy = py + t * uy - ay
                    proj = qx * ex + qy * ey
                    if 0.0 <= proj <= ln2:
                        # only count approaching contacts
                        if (s0 > 0 and su < 0) or (s0 < 0 and su > 0) or s0 == 0.0:
                            best = min(best, max(t, 0.0))
    # endpoints: circle-circle sweep
    for cx, cy in ((ax, ay), (bx, by)):
        rx = px - cx
        ry = py - cy
        a2 = ux * ux + uy * uy
        if a2 == 0.0:
            continue
        b2 = rx * ux + ry * uy
        c2 = rx * rx + ry * ry - r * r
        disc = b2 * b2 - a2 * c2
        if disc < 0.0:
            continue
        root = math.sqrt(disc)
        t = (-b2 - root) / a2
        if -1e-12 <= t <= 1.0:
            best = min(best, max(t, 0.0))
    return best


def step_tracker(spec: WorldSpec, state: WorldState, linear: float, angular: float,
                 segs=None) -> WorldState:
    """Turn, then advance along the new heading; motion clamps at wall contact.

    segs: precomputed collision_segments(spec), for callers on the hot path.
    """
    h = normalize_angle(state.tracker.heading + angular)
    x = state.tracker.x
    y = state.tracker.y
    if linear != 0.0:
        ux = linear * math.cos(h)
        uy = linear * math.sin(h)
        t_hit = 1.0
        for a, b in (segs if segs is not None else collision_segments(spec)):
            t = _sweep_hit_t(x, y, ux, uy, a[0], a[1], b[0], b[1], spec.tracker_radius)
            if t < t_hit:
                t_hit = t
        x = x + t_hit * ux
        y = y + t_hit * uy
    state.tracker = Pose(x, y, h)
    state.step_count += 1
    return state


def _polyline_lengths(waypoints):
    lens = []
    for (ax, ay), (bx, by) in zip(waypoints, waypoints[1:]):
        dx = bx - ax
        dy = by - ay
        lens.append(math.sqrt(dx * dx + dy * dy))
    return lens


def _point_at_progress(waypoints, lens, progress):
    """Point, segment direction and segment index at an arclength along the polyline."""
    rem = progress
    for i, ln in enumerate(lens):
        if rem <= ln or i == len(lens) - 1:
            ax, ay = waypoints[i]
            bx, by = waypoints[i + 1]
            if ln > 0.0:
                f = rem / ln
                if f > 1.0:
                    f = 1.0
                return (ax + f * (bx - ax), ay + f * (by - ay)), ((bx - ax) / ln, (by - ay) / ln), i
            return (ax, ay), (1.0, 0.0), i
        rem -= ln
    ax, ay = waypoints[-1]
    return (ax, ay), (1.0, 0.0), len(lens) - 1


def step_target(spec: WorldSpec, state: WorldState) -> WorldState:
    """Advance the target along its script with the sinusoidal zig-zag offset."""
    traj = spec.target.trajectory
    wps = traj.waypoints
    if len(wps) < 2:
        return state
    lens = _polyline_lengths(wps)
    total = sum(lens)
    progress = state.target_progress + traj.speed
    if total > 0.0:
        if traj.loop:
            while progress >= total:
                progress -= total
        elif progress > total:
            progress = total
    else:
        progress = 0.0
    (bx, by), (dx, dy), _ = _point_at_progress(wps, lens, progress)
    off = 0.0
    if traj.zigzag_amplitude != 0.0 and traj.zigzag_period > 0:
        off = traj.zigzag_amplitude * math.sin(math.tau * state.step_count / traj.zigzag_period)
    # lateral normal of the current segment
    nx = -dy
    ny = dx
    px = bx + off * nx
    py = by + off * ny
    if off != 0.0:
        # halve the offset until the target keeps its wall clearance
        for _ in range(24):
            if clearance(spec, px, py) >= spec.target.radius:
                break
            off *= 0.5
            px = bx + off * nx
            py = by + off * ny
        else:
            px, py = bx, by
    old = state.target
    mx = px - old.x
    my = py - old.y
    if mx != 0.0 or my != 0.0:
        heading = math.atan2(my, mx)
    else:
        heading = old.heading
    state.target = Pose(px, py, heading)
    state.target_progress = progress
    return state


def initial_state(spec: WorldSpec) -> WorldState:
    return WorldState(
        tracker=replace(spec.tracker_start),
        target=replace(spec.target.initial) if spec.target else Pose(0.0, 0.0, 0.0),
        target_progress=0.0,
        distractors=[replace(d.pose) for d in spec.distractors],
        step_count=0,
    )


# ---------------------------------------------------------------------------
# path planning: occupancy grid + A* + string pulling

def plan_path(spec: WorldSpec, start, goal, cell: float = 0.25, radius: float | None = None):
    """Waypoints from start to goal whose straight segments keep wall clearance."""
    if radius is None:
        radius = spec.target.radius if spec.target else 0.3
    xmin, ymin, xmax, ymax = spec.bounds
    for p in (start, goal):
        if not (xmin <= p[0] <= xmax and ymin <= p[1] <= ymax):
            raise NoPath(f"point {p} outside bounds")
    if clearance(spec, goal[0], goal[1]) < radius:
        raise NoPath(f"goal {goal} blocked")
    if clearance(spec, start[0], start[1]) < radius:
        raise NoPath(f"start {start} blocked")
    if segment_clearance(spec, start, goal) >= radius:
        return [tuple(start), tuple(goal)]

    nx = max(2, int(math.ceil((xmax - xmin) / cell)))
    ny = max(2, int(math.ceil((ymax - ymin) / cell)))

    def center(i, j):
        return (xmin + (i + 0.5) * (xmax - xmin) / nx, ymin + (j + 0.5) * (ymax - ymin) / ny)

    # conservative inflation: the whole cell must be clear for its center to pass
    pad = radius + 0.5 * math.hypot((xmax - xmin) / nx, (ymax - ymin) / ny)
    free = [[clearance(spec, *center(i, j)) >= pad for j in range(ny)] for i in range(nx)]

    def cell_of(p):
        i = min(nx - 1, max(0, int((p[0] - xmin) / (xmax - xmin) * nx)))
        j = min(ny - 1, max(0, int((p[1] - ymin) / (ymax - ymin) * ny)))
        return i, j

    def nearest_free(p):
        i0, j0 = cell_of(p)
        if free[i0][j0]:
            return i0, j0
        best = None
        for i in range(nx):
            for j in range(ny):
                if free[i][j]:
                    c = center(i, j)
                    d = (c[0] - p[0]) ** 2 + (c[1] - p[1]) ** 2
                    if segment_clearance(spec, p, c) < radius:
                        continue
                    if best is None or d < best[0]:
                        best = (d, i, j)
        if best is None:
            raise NoPath("no free cell reachable from point")
        return best[1], best[2]

    s = nearest_free(start)
    g = nearest_free(goal)
    moves = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
             (1, 1, math.sqrt(2)), (1, -1, math.sqrt(2)),
             (-1, 1, math.sqrt(2)), (-1, -1, math.sqrt(2))]
    dist = {s: 0.0}
    prev = {}
    counter = 0
    hq = [(0.0, counter, s)]
    seen = set()
    while hq:
        _, _, cur = heapq.heappop(hq)
        if cur in seen:
            continue
        seen.add(cur)
        if cur == g:
            break
        ci, cj = cur
        for di, dj, w in moves:
            i, j = ci + di, cj + dj
            if not (0 <= i < nx and 0 <= j < ny) or not free[i][j]:
                continue
            nd = dist[cur] + w
            nxt = (i, j)
            if nd < dist.get(nxt, math.inf):
                dist[nxt] = nd
                prev[nxt] = cur
                counter += 1
                gc = center(*g)
                cc = center(i, j)
                h = math.hypot(gc[0] - cc[0], gc[1] - cc[1]) / ((xmax - xmin) / nx)
                heapq.heappush(hq, (nd + h, counter, nxt))
    if g not in seen:
        raise NoPath("goal unreachable on occupancy grid")

    cells = [g]
    while cells[-1] != s:
        cells.append(prev[cells[-1]])
    cells.reverse()
    pts = [tuple(start)] + [center(i, j) for i, j in cells] + [tuple(goal)]

    # string pulling: greedily shortcut to the furthest point still clear
    pulled = [pts[0]]
    k = 0
    while k < len(pts) - 1:
        j = len(pts) - 1
        while j > k + 1 and segment_clearance(spec, pts[k], pts[j]) < radius:
            j -= 1
        pulled.append(pts[j])
        k = j
    return pulled


# ---------------------------------------------------------------------------
# mirroring

def _mirror_pose(p: Pose) -> Pose:
    return Pose(p.x, -p.y, normalize_angle(-p.heading))


def mirror_world(spec: WorldSpec) -> WorldSpec:
    """Reflect the world across the x-axis; headings negate, sprite textures flip.

    Reflection is an exact involution (coordinate negation only), and running a
    mirrored episode with left/right-swapped actions reproduces the mirrored
    trajectory of the original bitwise.
    """
    xmin, ymin, xmax, ymax = spec.bounds
    target = None
    if spec.target is not None:
        tr = spec.target.trajectory
        target = TargetSpec(
            initial=_mirror_pose(spec.target.initial),
            trajectory=TrajectoryScript(
                waypoints=[(x, -y) for x, y in tr.waypoints],
                speed=tr.speed,
                zigzag_amplitude=-tr.zigzag_amplitude,
                zigzag_period=tr.zigzag_period,
                loop=tr.loop,
            ),
            appearance=spec.target.appearance,
            radius=spec.target.radius,
            mirrored=not spec.target.mirrored,
        )
    return WorldSpec(
        bounds=(xmin, -ymax, xmax, -ymin),
        walls=[
            Wall(p0=(w.p0[0], -w.p0[1]), p1=(w.p1[0], -w.p1[1]),
                 texture=w.texture, background=w.background, visible=w.visible)
            for w in spec.walls
        ],
        floor_texture=spec.floor_texture,
        ceiling_texture=spec.ceiling_texture,
        light=Light(intensity=spec.light.intensity, tint=spec.light.tint),
        target=target,
        distractors=[
            Distractor(pose=_mirror_pose(d.pose), appearance=d.appearance,
                       static=d.static, radius=d.radius, mirrored=not d.mirrored)
            for d in spec.distractors
        ],
        tracker_start=_mirror_pose(spec.tracker_start),
        tracker_radius=spec.tracker_radius,
        map_version=spec.map_version,
    )


# ---------------------------------------------------------------------------
# validation and map file serialization

def validate_spec(spec: WorldSpec, n_textures: int | None = None) -> None:
    xmin, ymin, xmax, ymax = spec.bounds
    if not (xmin < xmax and ymin < ymax):
        raise ValueError("bounds rectangle is degenerate")
    for w in spec.walls:
        for px, py in (w.p0, w.p1):
            if not (xmin <= px <= xmax and ymin <= py <= ymax):
                raise ValueError(f"wall endpoint ({px}, {py}) outside bounds")
        if n_textures is not None and not (0 <= w.texture < n_textures):
            raise ValueError(f"wall texture id {w.texture} not in pool")
    if n_textures is not None:
        for tid in (spec.floor_texture, spec.ceiling_texture):
            if not (0 <= tid < n_textures):
                raise ValueError(f"texture id {tid} not in pool")
    if spec.target is not None:
        t = spec.target
        if not (xmin <= t.initial.x <= xmax and ymin <= t.initial.y <= ymax):
            raise ValueError("target initial pose outside bounds")
        if clearance(spec, t.initial.x, t.initial.y) < t.radius:
            raise ValueError("target initial pose inside a wall")
        if t.trajectory.speed < 0:
            raise ValueError("trajectory speed must be >= 0")
        wps = t.trajectory.waypoints
        for a, b in zip(wps, wps[1:]):
            if segment_clearance(spec, a, b) < t.radius:
                raise ValueError(f"trajectory segment {a}->{b} lacks wall clearance")
        if n_textures is not None and not (0 <= t.appearance < n_textures):
            raise ValueError("target appearance id not in pool")
    if not (0.0 <= spec.light.intensity <= 1.0):
        raise ValueError("light intensity must lie in [0, 1]")


def spec_to_dict(spec: WorldSpec) -> dict:
    d = {
        "map_version": spec.map_version,
        "bounds": list(spec.bounds),
        "walls": [
            {"p0": list(w.p0), "p1": list(w.p1), "texture": w.texture,
             "background": w.background, "visible": w.visible}
            for w in spec.walls
        ],
        "floor_texture": spec.floor_texture,
        "ceiling_texture": spec.ceiling_texture,
        "light": {"intensity": spec.light.intensity, "tint": list(spec.light.tint)},
        "tracker_start": [spec.tracker_start.x, spec.tracker_start.y, spec.tracker_start.heading],
        "tracker_radius": spec.tracker_radius,
        "distractors": [
            {"pose": [d2.pose.x, d2.pose.y, d2.pose.heading], "appearance": d2.appearance,
             "static": d2.static, "radius": d2.radius, "mirrored": d2.mirrored}
            for d2 in spec.distractors
        ],
    }
    if spec.target is not None:
        t = spec.target
        d["target"] = {
            "initial": [t.initial.x, t.initial.y, t.initial.heading],
            "trajectory": {
                "waypoints": [list(w) for w in t.trajectory.waypoints],
                "speed": t.trajectory.speed,
                "zigzag_amplitude": t.trajectory.zigzag_amplitude,
                "zigzag_period": t.trajectory.zigzag_period,
                "loop": t.trajectory.loop,
            },
            "appearance": t.appearance,
            "radius": t.radius,
            "mirrored": t.mirrored,
        }
    return d


def spec_from_dict(d: dict) -> WorldSpec:
    if d.get("map_version") != MAP_VERSION:
        raise ValueError(f"unsupported map_version {d.get('map_version')!r}")
    target = None
    if "target" in d and d["target"] is not None:
        t = d["target"]
        tr = t["trajectory"]
        target = TargetSpec(
            initial=Pose(*t["initial"]),
            trajectory=TrajectoryScript(
                waypoints=[tuple(w) for w in tr["waypoints"]],
                speed=tr["speed"],
                zigzag_amplitude=tr.get("zigzag_amplitude", 0.0),
                zigzag_period=tr.get("zigzag_period", 40),
                loop=tr.get("loop", True),
            ),
            appearance=t.get("appearance", 0),
            radius=t.get("radius", 0.3),
            mirrored=t.get("mirrored", False),
        )
    return WorldSpec(
        bounds=tuple(d["bounds"]),
        walls=[
            Wall(p0=tuple(w["p0"]), p1=tuple(w["p1"]), texture=w.get("texture", 0),
                 background=w.get("background", False), visible=w.get("visible", True))
            for w in d.get("walls", [])
        ],
        floor_texture=d.get("floor_texture", 0),
        ceiling_texture=d.get("ceiling_texture", 0),
        light=Light(intensity=d["light"]["intensity"], tint=tuple(d["light"]["tint"]))
        if "light" in d else Light(),
        target=target,
        distractors=[
            Distractor(pose=Pose(*x["pose"]), appearance=x.get("appearance", 0),
                       static=x.get("static", True), radius=x.get("radius", 0.3),
                       mirrored=x.get("mirrored", False))
            for x in d.get("distractors", [])
        ],
        tracker_start=Pose(*d["tracker_start"]),
        tracker_radius=d.get("tracker_radius", 0.25),
        map_version=d["map_version"],
    )


def save_map(spec: WorldSpec, path) -> None:
    with open(path, "w") as f:
        json.dump(spec_to_dict(spec), f, indent=1)
        f.write("\n")


def load_map(path) -> WorldSpec:
    with open(path) as f:
        return spec_from_dict(json.load(f))
