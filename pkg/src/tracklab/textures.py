"""Texture pool: procedural default textures and PPM (P6) file support."""

from __future__ import annotations

import os

import numpy as np


class EmptyTexturePool(Exception):
    pass


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write an (H, W, 3) array as binary PPM. Floats in [0,1] are scaled to bytes."""
    if rgb.dtype != np.uint8:
        rgb = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    h, w = rgb.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM into a float (H, W, 3) array in [0,1]."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P6"):
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    # header = magic, width, height, maxval; comments start with '#'
    fields = []
    i = 2
    while len(fields) < 3:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        fields.append(int(data[i:j]))
        i = j
    i += 1  # single whitespace after maxval
    w, h, maxval = fields
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=i)
    return raw.reshape(h, w, 3).astype(np.float64) / float(maxval)


def _checker(c1, c2, n=4, size=32):
    t = np.zeros((size, size, 3))
    ys, xs = np.mgrid[0:size, 0:size]
    mask = ((xs * n // size) + (ys * n // size)) % 2 == 0
    t[mask] = c1
    t[~mask] = c2
    return t


def _stripes(c1, c2, n=4, size=32, vertical=True):
    t = np.zeros((size, size, 3))
    ys, xs = np.mgrid[0:size, 0:size]
    coord = xs if vertical else ys
    mask = (coord * n // size) % 2 == 0
    t[mask] = c1
    t[~mask] = c2
    return t


def _bricks(mortar, brick, size=32):
    t = np.tile(np.asarray(brick, dtype=float), (size, size, 1))
    rows = 4
    for r in range(rows + 1):
        y = min(size - 1, r * size // rows)
        t[y, :] = mortar
    for r in range(rows):
        y0 = r * size // rows
        y1 = (r + 1) * size // rows
        shift = (size // 4) if r % 2 else 0
        for c in range(3):
            x = (c * size // 3 + shift) % size
            t[y0:y1, x] = mortar
    return t


def _noise(base, spread, seed, size=32):
    rng = np.random.default_rng(seed)
    t = np.asarray(base, dtype=float) + rng.uniform(-spread, spread, size=(size, size, 3))
    return np.clip(t, 0.0, 1.0)


def _solid(color, size=32):
    return np.tile(np.asarray(color, dtype=float), (size, size, 1))


def default_textures() -> list[np.ndarray]:
    """Built-in deterministic texture set; index 0 is a neutral wall texture."""
    gray = (0.55, 0.55, 0.58)
    dark = (0.28, 0.28, 0.32)
    return [
        _bricks((0.35, 0.33, 0.32), (0.62, 0.45, 0.38)),        # 0 brick wall
        _checker((0.9, 0.2, 0.15), (0.95, 0.85, 0.2), n=4),     # 1 target: red/yellow checker
        _stripes((0.2, 0.45, 0.85), (0.85, 0.87, 0.9), n=6),    # 2 blue/white stripes
        _checker(gray, dark, n=8),                              # 3 fine gray checker
        _noise((0.45, 0.52, 0.4), 0.08, seed=7),                # 4 mossy noise
        _stripes((0.55, 0.3, 0.6), (0.25, 0.12, 0.3), n=4, vertical=False),  # 5 purple bands
        _checker((0.15, 0.6, 0.35), (0.9, 0.9, 0.85), n=2),     # 6 coarse green checker
        _noise((0.6, 0.6, 0.65), 0.12, seed=11),                # 7 speckled concrete
        _stripes((0.85, 0.5, 0.15), (0.3, 0.2, 0.1), n=8),      # 8 orange slats
        _checker((0.1, 0.1, 0.12), (0.8, 0.75, 0.7), n=6),      # 9 tile floor
        _noise((0.35, 0.35, 0.45), 0.05, seed=13),              # 10 ceiling slate
        _bricks((0.2, 0.2, 0.25), (0.4, 0.5, 0.65), size=32),   # 11 blue brick
        _solid((0.05, 0.95, 0.15)),                             # 12 tracking beacon green
        _solid((0.95, 0.1, 0.85)),                              # 13 tracking beacon magenta
    ]


class TexturePool:
    """Indexed set of (H, W, 3) float textures with cached mean colors."""

    def __init__(self, textures: list[np.ndarray]):
        if not textures:
            raise EmptyTexturePool("texture pool is empty")
        self.textures = [np.ascontiguousarray(t, dtype=np.float64) for t in textures]
        self.means = np.array([t.mean(axis=(0, 1)) for t in self.textures])

    def __len__(self) -> int:
        return len(self.textures)

    @classmethod
    def default(cls) -> "TexturePool":
        return cls(default_textures())

    @classmethod
    def from_dir(cls, path) -> "TexturePool":
        names = sorted(n for n in os.listdir(path) if n.lower().endswith(".ppm"))
        if not names:
            raise EmptyTexturePool(f"no .ppm files in {path}")
        return cls([read_ppm(os.path.join(path, n)) for n in names])

    def save_dir(self, path) -> None:
        os.makedirs(path, exist_ok=True)
        for i, t in enumerate(self.textures):
            write_ppm(os.path.join(path, f"tex{i:03d}.ppm"), t)
