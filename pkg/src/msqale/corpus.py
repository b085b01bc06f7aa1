"""Synthetic distortion corpus: scene sets of K distorted versions per scene.

Distortion kinds emulate low-light restoration failure modes: under/over
enhancement (gamma), sensor-like noise, blur, color cast, desaturation and
over-enhancement artifacts (global/tiled histogram equalization). Severity
runs in [0,1]; for parametric kinds severity 0 is pixel-exact identity.
Every random decision flows through recorded child seeds so a corpus is a
pure function of (base images, K, seed) and can be regenerated bit-exactly
from its manifest.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .core import SceneSet, SeededRng, child_seed, luma
from .filters import gaussian_blur

MANIFEST_VERSION = 1

# kinds whose severity interpolates continuously from identity
PARAMETRIC_KINDS = (
    "gamma_under",
    "gamma_over",
    "gaussian_noise",
    "poisson_like_noise",
    "gaussian_blur",
    "color_cast",
    "desaturate",
)
ALL_KINDS = PARAMETRIC_KINDS + ("hist_equalize", "clahe_like")

NOISE_SIGMA_MAX = 0.12
POISSON_SCALE_MAX = 0.15
BLUR_SIGMA_MAX = 4.0


@dataclass(frozen=True)
class DistortionSpec:
    kind: str
    severity: float
    params: dict = field(default_factory=dict)

    def to_json(self):
        return {"kind": self.kind, "severity": self.severity, "params": dict(self.params)}

    @staticmethod
    def from_json(obj):
        return DistortionSpec(obj["kind"], float(obj["severity"]), dict(obj.get("params", {})))


def _check_spec(spec):
    if spec.kind not in ALL_KINDS:
        raise ValueError(f"unknown distortion kind {spec.kind!r}")
    if not 0.0 <= spec.severity <= 1.0:
        raise ValueError(f"severity {spec.severity} outside [0,1]")


def _hist_equalize_channel(ch):
    q = np.minimum((ch * 255.0).astype(np.int64), 255)
    hist = np.bincount(q.ravel(), minlength=256).astype(np.float64)
    cdf = np.cumsum(hist)
    nonzero = cdf[cdf > 0]
    if nonzero.size == 0 or cdf[-1] == nonzero[0]:
        return ch.copy()
    lut = (cdf - nonzero[0]) / (cdf[-1] - nonzero[0])
    return lut[q]


def _clahe_like(img, severity, grid=4):
    # tile-wise clipped equalization, no cross-tile interpolation; the
    # blockiness is part of the over-enhancement artifact being emulated
    clip_frac = 0.01 * (1.0 + 4.0 * severity)
    out = np.empty_like(img)
    h, w = img.shape[:2]
    ys = np.linspace(0, h, grid + 1).astype(np.int64)
    xs = np.linspace(0, w, grid + 1).astype(np.int64)
    for c in range(img.shape[2]):
        for i in range(grid):
            for j in range(grid):
                tile = img[ys[i] : ys[i + 1], xs[j] : xs[j + 1], c]
                if tile.size == 0:
                    continue
                q = np.minimum((tile * 255.0).astype(np.int64), 255)
                hist = np.bincount(q.ravel(), minlength=256).astype(np.float64)
                limit = max(1.0, clip_frac * tile.size)
                excess = np.maximum(hist - limit, 0.0).sum()
                hist = np.minimum(hist, limit) + excess / 256.0
                cdf = np.cumsum(hist)
                lut = cdf / cdf[-1]
                out[ys[i] : ys[i + 1], xs[j] : xs[j + 1], c] = lut[q]
    return out


def apply_distortion(img, spec, rng):
    """One distortion step; output clamped to [0,1], same shape as img."""
    _check_spec(spec)
    img = np.asarray(img, dtype=np.float64)
    s = spec.severity
    kind = spec.kind
    if kind == "gamma_under":
        out = np.power(img, 1.0 + 2.5 * s)
    elif kind == "gamma_over":
        out = (1.0 + 0.8 * s) * np.power(img, 1.0 - 0.7 * s)
    elif kind == "gaussian_noise":
        out = img + (NOISE_SIGMA_MAX * s) * rng.normal(size=img.shape)
    elif kind == "poisson_like_noise":
        out = img + (POISSON_SCALE_MAX * s) * np.sqrt(img) * rng.normal(size=img.shape)
    elif kind == "gaussian_blur":
        out = gaussian_blur(img, BLUR_SIGMA_MAX * s)
    elif kind == "color_cast":
        ch = int(spec.params.get("channel", 0))
        if ch not in (0, 1, 2):
            raise ValueError(f"color_cast channel {ch} outside 0..2")
        out = img.copy()
        out[:, :, ch] = out[:, :, ch] * (1.0 + 0.5 * s)
    elif kind == "desaturate":
        g = luma(img)[:, :, None]
        out = (1.0 - s) * img + s * g
    elif kind == "hist_equalize":
        out = np.stack([_hist_equalize_channel(img[:, :, c]) for c in range(3)], axis=2)
    elif kind == "clahe_like":
        out = _clahe_like(img, s)
    return np.clip(out, 0.0, 1.0)


def apply_chain(img, chain, rng):
    out = np.asarray(img, dtype=np.float64)
    for spec in chain:
        out = apply_distortion(out, spec, rng)
    return out


def sample_chain(rng, length_range=(1, 3), severity_range=(0.2, 1.0)):
    """Compose 1..3 distinct kinds with independently drawn severities."""
    lo, hi = length_range
    n = int(rng.integers(lo, hi + 1))
    kinds = rng.choice(len(ALL_KINDS), size=n, replace=False)
    chain = []
    for idx in kinds:
        kind = ALL_KINDS[int(idx)]
        severity = float(rng.uniform(*severity_range))
        params = {}
        if kind == "color_cast":
            params["channel"] = int(rng.integers(0, 3))
        chain.append(DistortionSpec(kind, severity, params))
    return chain


def version_chain(version, k, rng):
    """Version 0 is a strongly darkened original, version 1 the untouched
    well-lit image; the rest are sampled distortion chains."""
    if version == 0:
        return [DistortionSpec("gamma_under", float(rng.uniform(0.75, 1.0)))]
    if version == 1:
        return []
    return sample_chain(rng)


def build_training_corpus(base_images, k, seed):
    """base_images: list of (scene_id, HxWx3 float image). Returns
    (SceneSet, manifest dict)."""
    if k < 2:
        raise ValueError(f"need K >= 2 versions per scene, got {k}")
    if not base_images:
        raise ValueError("empty base image list")
    scenes = []
    manifest_scenes = []
    for i, (scene_id, base) in enumerate(base_images):
        scene_seed = child_seed(seed, i)
        versions = []
        mversions = []
        for v in range(k):
            vseed = child_seed(scene_seed, v)
            chain = version_chain(v, k, SeededRng(child_seed(vseed, 0)))
            img = apply_chain(base, chain, SeededRng(child_seed(vseed, 1)))
            versions.append(img)
            mversions.append(
                {"index": v, "seed": vseed, "chain": [c.to_json() for c in chain]}
            )
        scenes.append((scene_id, versions))
        manifest_scenes.append({"scene_id": scene_id, "versions": mversions})
    manifest = {
        "format_version": MANIFEST_VERSION,
        "seed": seed,
        "k": k,
        "scenes": manifest_scenes,
    }
    return SceneSet(scenes=scenes), manifest


def rebuild_from_manifest(base_images, manifest):
    """Re-synthesize a corpus from recorded per-version seeds and chains."""
    if manifest.get("format_version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {manifest.get('format_version')}")
    by_id = dict(base_images)
    scenes = []
    for sc in manifest["scenes"]:
        base = by_id[sc["scene_id"]]
        versions = []
        for mv in sc["versions"]:
            chain = [DistortionSpec.from_json(c) for c in mv["chain"]]
            versions.append(apply_chain(base, chain, SeededRng(child_seed(mv["seed"], 1))))
        scenes.append((sc["scene_id"], versions))
    return SceneSet(scenes=scenes)


def chain_severity(chain):
    """Scalar degradation proxy for pseudo-MOS: mean severity, 0 if clean."""
    if not chain:
        return 0.0
    return float(np.mean([c.severity for c in chain]))


def write_manifest(path, manifest):
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)


def distortion_ladder(img, kind, levels, seed=0):
    """Severity 0..1 in `levels` linear steps; element 0 is img itself.

    Noise kinds reuse one drawn noise field scaled by severity, so the
    residual grows monotonically and step 0 stays exact.
    """
    if levels < 2:
        raise ValueError(f"need at least 2 ladder levels, got {levels}")
    if kind not in PARAMETRIC_KINDS:
        raise ValueError(f"{kind!r} is not a parametric kind")
    img = np.asarray(img, dtype=np.float64)
    noise = None
    if kind in ("gaussian_noise", "poisson_like_noise"):
        noise = SeededRng(seed).normal(size=img.shape)
    out = []
    for s in np.linspace(0.0, 1.0, levels):
        if noise is not None:
            scale = NOISE_SIGMA_MAX if kind == "gaussian_noise" else POISSON_SCALE_MAX
            field_ = noise if kind == "gaussian_noise" else noise * np.sqrt(img)
            step = np.clip(img + scale * s * field_, 0.0, 1.0)
        else:
            step = apply_distortion(img, DistortionSpec(kind, float(s)), SeededRng(seed))
        out.append(step)
    return out


def make_toy_scenes(n, side=160, seed=0):
    """Deterministic colorful synthetic base scenes (sharp, textured).

    Each scene mixes a two-color gradient, random solid rectangles and
    circles, a sinusoidal texture and a trace of noise, clipped away from
    0/1 so gamma distortions stay informative.
    """
    rng = SeededRng(seed)
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64) / max(side - 1, 1)
    scenes = []
    for i in range(n):
        r = rng.child(i)
        c0 = r.uniform(0.1, 0.9, size=3)
        c1 = r.uniform(0.1, 0.9, size=3)
        ang = r.uniform(0, 2 * np.pi)
        t = (np.cos(ang) * xx + np.sin(ang) * yy)[:, :, None]
        t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
        img = c0[None, None, :] * (1 - t) + c1[None, None, :] * t
        for _ in range(int(r.integers(4, 9))):
            col = r.uniform(0.05, 0.95, size=3)
            if r.integers(0, 2) == 0:
                x0, y0 = r.integers(0, side, size=2)
                w = int(r.integers(side // 10, side // 2))
                h = int(r.integers(side // 10, side // 2))
                img[y0 : y0 + h, x0 : x0 + w] = col
            else:
                cx, cy = r.uniform(0, side, size=2)
                rad = r.uniform(side / 16, side / 4)
                mask = (np.mgrid[0:side, 0:side][1] - cx) ** 2 + (
                    np.mgrid[0:side, 0:side][0] - cy
                ) ** 2 < rad**2
                img[mask] = col
        fx, fy = r.uniform(4, 12, size=2)
        tex = 0.06 * np.sin(2 * np.pi * (fx * xx + fy * yy))
        img = img + tex[:, :, None] + 0.01 * r.normal(size=img.shape)
        scenes.append((f"scene{i:03d}", np.clip(img, 0.05, 0.95)))
    return scenes
