"""Image containers, deterministic randomness, file IO, and patch extraction.

Images are numpy float64 arrays, shape (H, W, 3) for RGB or (H, W) for
single-channel subband/luma data. RGB values loaded from files live in [0, 1];
subbands may be negative.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import cv2
import numpy as np

# Rec.601 luma weights; the scoring pipeline needs a single documented choice.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_MASK64 = (1 << 64) - 1


class UnsupportedFormatError(ValueError):
    """File is not one of the supported containers (PNG, binary PPM)."""


class CorruptDataError(ValueError):
    """File has a supported format but its contents do not decode."""


# ---------------------------------------------------------------------------
# deterministic randomness
# ---------------------------------------------------------------------------

def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def child_seed(parent: int, index: int) -> int:
    """Seed-derivation rule for parallel/streamed work.

    child = splitmix64(splitmix64(parent) XOR splitmix64(index + 1)).
    Pure 64-bit integer arithmetic, identical on every platform.
    """
    return _splitmix64(_splitmix64(parent & _MASK64) ^ _splitmix64((index + 1) & _MASK64))


class SeededRng:
    """A PCG64 stream behind an explicit 64-bit seed.

    PCG64 guarantees the same draw sequence for the same seed across runs and
    platforms. An instance is single-owner: parallel consumers must each get
    their own child via :meth:`child`, never a shared handle.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, index: int) -> "SeededRng":
        return SeededRng(child_seed(self.seed, index))

    # passthroughs so call sites do not reach into .gen
    def random(self, *a, **k):
        return self.gen.random(*a, **k)

    def uniform(self, *a, **k):
        return self.gen.uniform(*a, **k)

    def normal(self, *a, **k):
        return self.gen.normal(*a, **k)

    def integers(self, *a, **k):
        return self.gen.integers(*a, **k)

    def permutation(self, *a, **k):
        return self.gen.permutation(*a, **k)

    def choice(self, *a, **k):
        return self.gen.choice(*a, **k)

    def __repr__(self):
        return f"SeededRng(seed={self.seed})"


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Patch:
    """A square crop plus where it came from in the source image."""

    x: int
    y: int
    side: int
    pixels: np.ndarray


@dataclass
class SceneSet:
    """N scenes, each holding K distorted versions of identical size."""

    scenes: list  # list of (scene_id, [version arrays])

    @property
    def n(self) -> int:
        return len(self.scenes)

    @property
    def k(self) -> int:
        return len(self.scenes[0][1]) if self.scenes else 0

    def validate(self):
        if self.n == 0:
            raise ValueError("scene set is empty")
        k = self.k
        if k < 2:
            raise ValueError("training needs K >= 2 versions per scene")
        for sid, versions in self.scenes:
            if len(versions) != k:
                raise ValueError(f"scene {sid!r} has {len(versions)} versions, expected {k}")
            shape = versions[0].shape
            for v in versions:
                if v.shape != shape:
                    raise ValueError(f"scene {sid!r} mixes image sizes")


def pixels_of(patch) -> np.ndarray:
    """Accept a Patch or a bare array wherever either is convenient."""
    return patch.pixels if isinstance(patch, Patch) else np.asarray(patch)


# ---------------------------------------------------------------------------
# file IO: PNG (via OpenCV) and binary PPM (P6)
# ---------------------------------------------------------------------------

def load_image(path) -> np.ndarray:
    """Load an 8- or 16-bit PNG or binary PPM as float64 RGB in [0, 1]."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        return _load_png(path)
    if ext in (".ppm", ".pnm"):
        with open(path, "rb") as f:
            return _parse_ppm(f.read(), path)
    raise UnsupportedFormatError(f"unsupported image format: {path}")


def _load_png(path):
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise CorruptDataError(f"PNG failed to decode: {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise UnsupportedFormatError(f"unsupported PNG sample type {raw.dtype}: {path}")
    if raw.ndim == 2:
        raw = np.stack([raw] * 3, axis=-1)
    elif raw.shape[2] == 4:
        raw = raw[:, :, :3]
    img = raw[:, :, ::-1].astype(np.float64) / scale  # BGR -> RGB
    return np.ascontiguousarray(img)


def _parse_ppm(data: bytes, path: str):
    if not data.startswith(b"P6"):
        raise UnsupportedFormatError(f"not a binary PPM (P6): {path}")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptDataError(f"truncated PPM header: {path}")
        try:
            fields.append(int(data[start:pos]))
        except ValueError:
            raise CorruptDataError(f"bad PPM header token: {path}") from None
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if width <= 0 or height <= 0 or not (0 < maxval < 65536):
        raise CorruptDataError(f"bad PPM dimensions/maxval: {path}")
    nbytes = 1 if maxval < 256 else 2
    raster = data[pos : pos + width * height * 3 * nbytes]
    if len(raster) != width * height * 3 * nbytes:
        raise CorruptDataError(f"truncated PPM raster: {path}")
    dtype = ">u2" if nbytes == 2 else np.uint8
    arr = np.frombuffer(raster, dtype=dtype).reshape(height, width, 3)
    return arr.astype(np.float64) / float(maxval)


def save_image(img: np.ndarray, path) -> None:
    """Write RGB image as 8-bit PNG or binary PPM. Values are clamped to [0, 1]
    then rounded, so a save/load round trip is exact to within 1/255 per value."""
    path = os.fspath(path)
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("save_image expects an (H, W, 3) RGB image")
    q = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        if not cv2.imwrite(path, q[:, :, ::-1]):
            raise OSError(f"could not write {path}")
    elif ext in (".ppm", ".pnm"):
        header = f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
        try:
            with open(path, "wb") as f:
                f.write(header + q.tobytes())
        except OSError as e:
            raise OSError(f"could not write {path}: {e}") from e
    else:
        raise UnsupportedFormatError(f"unsupported output format: {path}")


# ---------------------------------------------------------------------------
# patches and small helpers
# ---------------------------------------------------------------------------

def crop_patch(img: np.ndarray, x: int, y: int, side: int) -> Patch:
    """Pixel-exact copy of the square at (x, y) with the given side."""
    h, w = img.shape[:2]
    if side < 1 or x < 0 or y < 0 or x + side > w or y + side > h:
        raise ValueError(f"crop ({x},{y},{side}) outside {w}x{h} image")
    return Patch(x=x, y=y, side=side, pixels=img[y : y + side, x : x + side].copy())


def luma(img: np.ndarray) -> np.ndarray:
    """Rec.601 luma of an RGB image; single-channel input passes through."""
    if img.ndim == 2:
        return img
    r, g, b = LUMA_WEIGHTS
    return r * img[:, :, 0] + g * img[:, :, 1] + b * img[:, :, 2]


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel-centre sampling (cv2/PIL convention)."""
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    squeeze = img.ndim == 2
    a = img[:, :, None] if squeeze else img
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    y0f = np.floor(ys)
    x0f = np.floor(xs)
    fy = (ys - y0f)[:, None, None]
    fx = (xs - x0f)[None, :, None]
    y0 = np.clip(y0f.astype(np.int64), 0, h - 1)
    y1 = np.clip(y0f.astype(np.int64) + 1, 0, h - 1)
    x0 = np.clip(x0f.astype(np.int64), 0, w - 1)
    x1 = np.clip(x0f.astype(np.int64) + 1, 0, w - 1)
    top = a[np.ix_(y0, x0)] * (1 - fx) + a[np.ix_(y0, x1)] * fx
    bot = a[np.ix_(y1, x0)] * (1 - fx) + a[np.ix_(y1, x1)] * fx
    out = top * (1 - fy) + bot * fy
    return out[:, :, 0] if squeeze else out
