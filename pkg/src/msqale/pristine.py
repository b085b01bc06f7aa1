"""Pristine reference model: sharp/colorful patch selection, PCA, MVG.

The reference bank keeps non-overlapping tiles whose sharpness and
colorfulness exceed per-image fractions of that image's maxima, reduces
their features with PCA, and fits a multivariate Gaussian (mu_r, Sigma_r)
that test images are scored against.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .core import CorruptDataError, crop_patch, luma
from .filters import local_mean_std


@dataclass
class PristineConfig:
    patch_side: int = 96
    tau_s: float = 0.3
    tau_c: float = 0.8
    d: int = 0  # 0 resolves to min(2048, feature dim, samples - 1)
    per_image: bool = True  # False compares against corpus-global maxima


@dataclass
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray  # (dim, d), orthonormal columns
    explained: np.ndarray

    @property
    def d(self):
        return self.basis.shape[1]


@dataclass
class MvgModel:
    mu: np.ndarray
    sigma: np.ndarray


def sharpness_index(patch):
    """Mean of the Gaussian-windowed local standard deviation of luma."""
    px = np.asarray(patch, dtype=np.float64)
    g = luma(px) if px.ndim == 3 else px
    if min(g.shape) < 7:
        raise ValueError(f"patch {g.shape} smaller than the 7x7 window")
    _, sigma = local_mean_std(g)
    return float(sigma.mean())


def colorfulness_index(patch):
    """Opponent-channel statistic: chroma spread plus 0.3x chroma magnitude."""
    px = np.asarray(patch, dtype=np.float64)
    if px.ndim != 3 or px.shape[2] != 3:
        raise ValueError("colorfulness needs an RGB patch")
    rg = px[:, :, 0] - px[:, :, 1]
    yb = 0.5 * (px[:, :, 0] + px[:, :, 1]) - px[:, :, 2]
    sig = np.sqrt(rg.var() + yb.var())
    mu = np.sqrt(rg.mean() ** 2 + yb.mean() ** 2)
    return float(sig + 0.3 * mu)


def tile_rects_nonoverlap(shape, side):
    h, w = shape[:2]
    return [
        (x, y, side)
        for y in range(0, h - side + 1, side)
        for x in range(0, w - side + 1, side)
    ]


def select_pristine_rects(images, cfg):
    """Per image (or globally with per_image=False): keep tiles with
    sharpness > tau_s * max and colorfulness > tau_c * max, both strict.
    Returns a list of (image index, rect) pairs."""
    per_image = []
    for idx, img in enumerate(images):
        rects = tile_rects_nonoverlap(img.shape, cfg.patch_side)
        if not rects:
            raise ValueError(
                f"image {idx} smaller than the {cfg.patch_side}px patch side"
            )
        sharp = []
        color = []
        for x, y, side in rects:
            tile = img[y : y + side, x : x + side]
            sharp.append(sharpness_index(tile))
            color.append(colorfulness_index(tile))
        per_image.append((idx, rects, np.array(sharp), np.array(color)))
    if cfg.per_image:
        thresholds = {
            idx: (cfg.tau_s * s.max(), cfg.tau_c * c.max())
            for idx, _, s, c in per_image
        }
    else:
        gs = cfg.tau_s * max(s.max() for _, _, s, _ in per_image)
        gc = cfg.tau_c * max(c.max() for _, _, _, c in per_image)
        thresholds = {idx: (gs, gc) for idx, _, _, _ in per_image}
    kept = []
    for idx, rects, sharp, color in per_image:
        ts, tc = thresholds[idx]
        for r, s, c in zip(rects, sharp, color):
            if s > ts and c > tc:
                kept.append((idx, r))
    if not kept:
        raise ValueError("no patch passed the pristine selection thresholds")
    return kept


def select_pristine_patches(images, cfg):
    return [
        crop_patch(images[idx], x, y, side)
        for idx, (x, y, side) in select_pristine_rects(images, cfg)
    ]


def fit_pca(features, d):
    """Top-d principal directions of the sample covariance (1/(n-1)).

    Sign convention: each component's largest-magnitude entry is positive.
    """
    x = np.asarray(features, dtype=np.float64)
    n, dim = x.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 samples")
    if d < 1 or d > min(n - 1, dim):
        raise ValueError(f"d={d} outside 1..min(n-1, dim)={min(n - 1, dim)}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / (n - 1)
    if np.trace(cov) <= 0.0:
        raise ValueError("degenerate sample set: zero total variance")
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:d]
    basis = vecs[:, order]
    explained = vals[order]
    for j in range(basis.shape[1]):
        k = np.argmax(np.abs(basis[:, j]))
        if basis[k, j] < 0:
            basis[:, j] = -basis[:, j]
    return PcaModel(mean=mean, basis=basis, explained=explained)


def pca_project(model, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != model.mean.shape[0]:
        raise ValueError(
            f"dimension mismatch: {v.shape[-1]} vs {model.mean.shape[0]}"
        )
    return (v - model.mean) @ model.basis


def fit_mvg(features):
    """Sample mean and (n-1)-normalized covariance, symmetrized."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("MVG fit needs at least 2 samples")
    mu = x.mean(axis=0)
    xc = x - mu
    sigma = (xc.T @ xc) / (x.shape[0] - 1)
    sigma = 0.5 * (sigma + sigma.T)
    return MvgModel(mu=mu, sigma=sigma)


# ---------------------------------------------------------------------------
# persisted reference model

MAGIC = b"MSQP"
VERSION = 1
PROVIDERS = {"msqale": 1, "nss": 2}
PROVIDER_NAMES = {v: k for k, v in PROVIDERS.items()}


@dataclass
class PristineModel:
    provider: str
    patch_side: int
    m: int  # pyramid depth used for features (0 for nss)
    pca: PcaModel
    mvg: MvgModel

    @property
    def feature_dim(self):
        return self.pca.mean.shape[0]


def save_pristine_model(path, model):
    dim = model.feature_dim
    d = model.pca.d
    parts = [
        MAGIC,
        struct.pack(
            "<IIIII",
            VERSION,
            PROVIDERS[model.provider],
            model.patch_side,
            model.m,
            dim,
        ),
        struct.pack("<I", d),
    ]
    for arr, shape in (
        (model.pca.mean, (dim,)),
        (model.pca.basis, (dim, d)),
        (model.pca.explained, (d,)),
        (model.mvg.mu, (d,)),
        (model.mvg.sigma, (d, d)),
    ):
        a = np.ascontiguousarray(arr, dtype="<f8")
        if a.shape != shape:
            raise ValueError(f"model field shape {a.shape} != {shape}")
        parts.append(a.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_pristine_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CorruptDataError(f"{path}: not a pristine model file")
    if len(data) < 4 + 24:
        raise CorruptDataError(f"{path}: truncated header")
    version, provider_code, patch_side, m, dim = struct.unpack_from("<IIIII", data, 4)
    if version != VERSION:
        raise CorruptDataError(f"{path}: unsupported version {version}")
    if provider_code not in PROVIDER_NAMES:
        raise CorruptDataError(f"{path}: unknown provider code {provider_code}")
    (d,) = struct.unpack_from("<I", data, 24)
    off = 28
    arrays = []
    for shape in ((dim,), (dim, d), (d,), (d,), (d, d)):
        n = int(np.prod(shape))
        if off + 8 * n > len(data):
            raise CorruptDataError(f"{path}: truncated array data")
        arrays.append(
            np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        )
        off += 8 * n
    if off != len(data):
        raise CorruptDataError(f"{path}: trailing bytes")
    mean, basis, explained, mu, sigma = arrays
    return PristineModel(
        provider=PROVIDER_NAMES[provider_code],
        patch_side=patch_side,
        m=m,
        pca=PcaModel(mean=mean, basis=basis, explained=explained),
        mvg=MvgModel(mu=mu, sigma=sigma),
    )
