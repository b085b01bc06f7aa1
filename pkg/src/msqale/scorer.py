"""End-to-end scoring: tile the test image, extract per-level features,
project through the pristine PCA, fit a test MVG and measure the averaged
covariance quadratic distance to the pristine MVG. Lower Q means closer to
pristine.
"""

from dataclasses import dataclass

import numpy as np

from .core import resize_bilinear
from .levels import level_bands, level_list
from .nss import nss_patch_features
from .pristine import (
    PristineConfig,
    PristineModel,
    fit_mvg,
    fit_pca,
    pca_project,
    select_pristine_rects,
)


def tile_patches(img, side):
    """All side x side rectangles at stride side/2, row-major; side even."""
    h, w = np.asarray(img).shape[:2]
    if side % 2 != 0:
        raise ValueError(f"patch side must be even, got {side}")
    if h < side or w < side:
        raise ValueError(f"image {w}x{h} smaller than the {side}px patch side")
    step = side // 2
    return [
        (x, y, side)
        for y in range(0, h - side + 1, step)
        for x in range(0, w - side + 1, step)
    ]


def depth_from_encoders(encoders):
    """Pyramid depth implied by an encoder set; validates completeness."""
    m = max((l for l in encoders if l > 0), default=0)
    want = set(level_list(m))
    have = set(encoders)
    if have != want:
        raise ValueError(f"encoder levels {sorted(have)} != required {sorted(want)}")
    return m


def _coloc_crop(band, rect, factor):
    """Crop the region co-located with rect (native coords) in a band whose
    resolution is 1/factor of native; clamped to stay inside the band."""
    x, y, side = rect
    bh, bw = band.shape[:2]
    s = max(int(round(side / factor)), 1)
    s = min(s, bh, bw)
    xs = min(max(int(round(x / factor)), 0), bw - s)
    ys = min(max(int(round(y / factor)), 0), bh - s)
    return band[ys : ys + s, xs : xs + s]


def msqale_features_at(img, rects, encoders):
    """Concatenated per-level embeddings for each rect; rects are canonically
    sorted by (y, x) so feature order never depends on caller order."""
    m = depth_from_encoders(encoders)
    bands = level_bands(np.asarray(img, dtype=np.float64), m)
    feats = []
    for x, y, side in sorted(rects, key=lambda r: (r[1], r[0])):
        parts = []
        for level in level_list(m):
            factor = 1 if level == 0 else 2 ** (m if level < 0 else level - 1)
            crop = _coloc_crop(bands[level], (x, y, side), factor)
            enc = encoders[level]
            if crop.shape[0] != enc.input_side or crop.shape[1] != enc.input_side:
                crop = resize_bilinear(crop, enc.input_side, enc.input_side)
            parts.append(enc.forward(crop))
        feats.append(np.concatenate(parts))
    return np.stack(feats)


def nss_features_at(img, rects):
    img = np.asarray(img, dtype=np.float64)
    feats = []
    for x, y, side in sorted(rects, key=lambda r: (r[1], r[0])):
        feats.append(nss_patch_features(img[y : y + side, x : x + side]))
    return np.stack(feats)


def features_at(img, rects, provider, encoders=None):
    if provider == "msqale":
        if not encoders:
            raise ValueError("msqale provider needs per-level encoders")
        return msqale_features_at(img, rects, encoders)
    if provider == "nss":
        return nss_features_at(img, rects)
    raise ValueError(f"unknown feature provider {provider!r}")


def msqale_features(img, encoders, side):
    return msqale_features_at(img, tile_patches(img, side), encoders)


@dataclass
class QualityScore:
    q: float
    patch_count: int
    provider: str


def _solve_avg_cov(avg, diff):
    """Solve avg @ x = diff, escalating a trace-scaled ridge only when the
    factorization says the matrix is not positive definite."""
    d = avg.shape[0]
    try:
        np.linalg.cholesky(avg)
        return np.linalg.solve(avg, diff)
    except np.linalg.LinAlgError:
        pass
    base = 1e-6 * np.trace(avg) / d
    if not np.isfinite(base) or base <= 0.0:
        base = 1e-12
    for i in range(12):
        reg = avg + (base * 10.0**i) * np.eye(d)
        try:
            np.linalg.cholesky(reg)
            return np.linalg.solve(reg, diff)
        except np.linalg.LinAlgError:
            continue
    raise ValueError("covariance not regularizable")


def quality_score(model, features):
    """Averaged-covariance quadratic distance between the test features'
    MVG and the pristine MVG, in the pristine PCA space."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least 2 feature vectors to fit the test MVG")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature values")
    proj = pca_project(model.pca, x)
    test = fit_mvg(proj)
    diff = model.mvg.mu - test.mu
    avg = 0.5 * (model.mvg.sigma + test.sigma)
    q = float(np.sqrt(max(diff @ _solve_avg_cov(avg, diff), 0.0)))
    return QualityScore(q=q, patch_count=x.shape[0], provider=model.provider)


def score_image(img, model, encoders=None):
    rects = tile_patches(img, model.patch_side)
    feats = features_at(img, rects, model.provider, encoders)
    return quality_score(model, feats)


def build_pristine_model(images, cfg: PristineConfig, provider="msqale", encoders=None):
    """Select sharp/colorful tiles from well-lit images, featurize them, fit
    PCA and the reference MVG."""
    kept = select_pristine_rects(images, cfg)
    by_image = {}
    for idx, rect in kept:
        by_image.setdefault(idx, []).append(rect)
    bank = []
    for idx in sorted(by_image):
        bank.append(features_at(images[idx], by_image[idx], provider, encoders))
    bank = np.concatenate(bank)
    if bank.shape[0] < 2:
        raise ValueError("pristine bank needs at least 2 patches")
    dim = bank.shape[1]
    d = cfg.d if cfg.d > 0 else min(2048, dim)
    d = min(d, bank.shape[0] - 1, dim)
    pca = fit_pca(bank, d)
    mvg = fit_mvg(pca_project(pca, bank))
    m = depth_from_encoders(encoders) if provider == "msqale" else 0
    return PristineModel(
        provider=provider, patch_side=cfg.patch_side, m=m, pca=pca, mvg=mvg
    )
