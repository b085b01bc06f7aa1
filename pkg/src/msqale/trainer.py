"""Scene-wise multi-view contrastive training, one encoder per subband.

Each batch scene contributes two non-overlapping square views shared by its
K versions. With z_k1, z_k2 the embeddings of version k's two views, the
anchor loss is the softmax cross-entropy of the anchor against all K
opposite-view embeddings (temperature tau), and the batch loss sums both
view directions over all versions and scenes, divided by N*K. Negatives
therefore come from other versions of the same scene; an ablation mode
merges the whole batch into one pool so negatives cross scenes instead.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import SeededRng, child_seed, resize_bilinear
from .encoder import Encoder
from .levels import level_bands, level_list

DESK_SCHEDULE = {"shallow": (2, 4), "mid": (4, 4), "deep": (8, 4)}


def default_nk(level):
    """Desk-scale (N scenes, K versions) per level; deeper bands are smaller
    so they afford more scenes per batch."""
    if level in (0, 1):
        return (2, 4)
    if level == 2:
        return (4, 4)
    return (8, 4)


def full_nk(level):
    """Full-scale per-level (N, K) schedule, settable via config."""
    table = {0: (4, 10), 1: (4, 10), 2: (8, 20), 3: (16, 40), -1: (32, 40)}
    return table.get(level, (32, 40))


@dataclass
class TrainConfig:
    tau: float = 0.1
    epochs: int = 15
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    train_side: int = 64
    widths: tuple = (16, 32, 64)
    schedule: dict = field(default_factory=dict)
    negatives: str = "same_scene"

    def nk_for(self, level):
        if level in self.schedule:
            return self.schedule[level]
        return default_nk(level)


@dataclass
class ViewPair:
    """Two disjoint square rectangles (x, y, side) plus the crops of all K
    versions at each rectangle."""

    rect1: tuple
    rect2: tuple
    view1: list
    view2: list


def make_views(scene_versions, rng, min_side=8):
    """Split uniformly into vertical or horizontal halves; in each half place
    its largest inscribed square at a uniform random valid offset. The same
    two rectangles crop every version."""
    if len(scene_versions) < 2:
        raise ValueError("need at least 2 versions to form views")
    h, w = scene_versions[0].shape[:2]
    for img in scene_versions[1:]:
        if img.shape[:2] != (h, w):
            raise ValueError("versions of one scene must share dimensions")
    if rng.integers(0, 2) == 0:
        halves = [(0, 0, w // 2, h), (w // 2, 0, w - w // 2, h)]
    else:
        halves = [(0, 0, w, h // 2), (0, h // 2, w, h - h // 2)]
    rects = []
    for x0, y0, hw, hh in halves:
        side = min(hw, hh)
        if side < min_side:
            raise ValueError(
                f"image {w}x{h} too small for views of side >= {min_side}"
            )
        xo = x0 + int(rng.integers(0, hw - side + 1))
        yo = y0 + int(rng.integers(0, hh - side + 1))
        rects.append((xo, yo, side))
    view1 = [img[rects[0][1] : rects[0][1] + rects[0][2], rects[0][0] : rects[0][0] + rects[0][2]] for img in scene_versions]
    view2 = [img[rects[1][1] : rects[1][1] + rects[1][2], rects[1][0] : rects[1][0] + rects[1][2]] for img in scene_versions]
    return ViewPair(rect1=rects[0], rect2=rects[1], view1=view1, view2=view2)


def cosine_similarity(u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("zero-norm embedding")
    return float(u @ v) / (nu * nv)


def _logsumexp(row):
    m = row.max()
    return m + np.log(np.exp(row - m).sum())


def anchor_loss(anchor, positive, negatives, tau):
    """Softmax cross-entropy of the anchor against positive plus negatives."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    sims = np.array(
        [cosine_similarity(anchor, positive)]
        + [cosine_similarity(anchor, n) for n in negatives]
    )
    a = sims / tau
    return float(_logsumexp(a) - a[0])


def _normalize_rows(z):
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm embedding")
    return z / norms[:, None], norms


def scene_loss_and_grads(z1, z2, tau):
    """Sum of the 2K anchor losses of one scene plus gradients wrt z1, z2.

    z1, z2: (K, E) view-1 / view-2 embeddings of the K versions.
    """
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    zh1, n1 = _normalize_rows(z1)
    zh2, n2 = _normalize_rows(z2)
    s = zh1 @ zh2.T
    a = s / tau
    k = a.shape[0]
    # row-softmax serves view-1 anchors, column-softmax view-2 anchors
    row_m = a.max(axis=1, keepdims=True)
    row_e = np.exp(a - row_m)
    row_lse = row_m[:, 0] + np.log(row_e.sum(axis=1))
    col_m = a.max(axis=0, keepdims=True)
    col_e = np.exp(a - col_m)
    col_lse = col_m[0] + np.log(col_e.sum(axis=0))
    diag = np.diag(a)
    total = float((row_lse - diag).sum() + (col_lse - diag).sum())

    p_row = row_e / row_e.sum(axis=1, keepdims=True)
    p_col = col_e / col_e.sum(axis=0, keepdims=True)
    eye = np.eye(k)
    ds = (p_row - eye + p_col - eye) / tau
    dzh1 = ds @ zh2
    dzh2 = ds.T @ zh1
    dz1 = (dzh1 - (dzh1 * zh1).sum(axis=1, keepdims=True) * zh1) / n1[:, None]
    dz2 = (dzh2 - (dzh2 * zh2).sum(axis=1, keepdims=True) * zh2) / n2[:, None]
    return total, dz1, dz2


def batch_loss(scene_embeddings, tau):
    """Mean Eq-style loss over a batch: sum of all scenes' 2K anchor losses
    divided by N*K (twice the per-anchor mean)."""
    if not scene_embeddings:
        raise ValueError("empty batch")
    k = scene_embeddings[0][0].shape[0]
    total = 0.0
    for z1, z2 in scene_embeddings:
        if z1.shape[0] != k or z2.shape[0] != k:
            raise ValueError("inconsistent K across batch scenes")
        t, _, _ = scene_loss_and_grads(z1, z2, tau)
        total += t
    return total / (len(scene_embeddings) * k)


def batch_loss_and_grads(scene_embeddings, tau):
    if not scene_embeddings:
        raise ValueError("empty batch")
    n = len(scene_embeddings)
    k = scene_embeddings[0][0].shape[0]
    scale = 1.0 / (n * k)
    total = 0.0
    grads = []
    for z1, z2 in scene_embeddings:
        t, dz1, dz2 = scene_loss_and_grads(z1, z2, tau)
        total += t
        grads.append((dz1 * scale, dz2 * scale))
    return total * scale, grads


def encode_views(encoder, scenes, want_cache=False):
    """scenes: list of (view1 patches, view2 patches). Returns per-scene
    (z1, z2) stacks and, when requested, the per-patch backward caches."""
    embeds = []
    caches = []
    for view1, view2 in scenes:
        rows1, rows2, c1, c2 = [], [], [], []
        for p in view1:
            z, cache = encoder.forward(p, want_cache=True)
            rows1.append(z)
            c1.append(cache)
        for p in view2:
            z, cache = encoder.forward(p, want_cache=True)
            rows2.append(z)
            c2.append(cache)
        embeds.append((np.stack(rows1), np.stack(rows2)))
        caches.append((c1, c2))
    if want_cache:
        return embeds, caches
    return embeds


def batch_loss_from_patches(encoder, scenes, tau, want_grads=False, negatives="same_scene"):
    """Loss of a batch of cropped (already resized) view patches; optionally
    also the parameter gradients, accumulated in a fixed order.

    negatives="cross_scene" pools the whole batch into one pseudo-scene, so
    anchors see candidates from every scene (the ablation arm).
    """
    embeds, caches = encode_views(encoder, scenes, want_cache=True)
    n = len(scenes)
    k = embeds[0][0].shape[0]
    if negatives == "cross_scene":
        z1 = np.concatenate([e[0] for e in embeds])
        z2 = np.concatenate([e[1] for e in embeds])
        total, dz1, dz2 = scene_loss_and_grads(z1, z2, tau)
        loss = total / (n * k)
        per_scene = [
            (dz1[i * k : (i + 1) * k] / (n * k), dz2[i * k : (i + 1) * k] / (n * k))
            for i in range(n)
        ]
    elif negatives == "same_scene":
        loss, per_scene = batch_loss_and_grads(embeds, tau)
    else:
        raise ValueError(f"unknown negatives mode {negatives!r}")
    if not want_grads:
        return loss
    grads = [np.zeros_like(p, dtype=np.float64) for p in encoder.params()]
    for (c1, c2), (dz1, dz2) in zip(caches, per_scene):
        for cache, dz in list(zip(c1, dz1)) + list(zip(c2, dz2)):
            for gi, g in enumerate(encoder.backward(cache, dz)):
                grads[gi] += g
    return loss, grads


def adam_init(params):
    return {
        "m": [np.zeros(p.shape, dtype=np.float64) for p in params],
        "v": [np.zeros(p.shape, dtype=np.float64) for p in params],
    }


def adam_step(params, grads, state, lr, beta1, beta2, eps, t):
    """Standard bias-corrected Adam; params updated in float64 then stored
    back at their own dtype."""
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != np.asarray(g).shape:
            raise ValueError("gradient shape mismatch")
        g = np.asarray(g, dtype=np.float64)
        state["m"][i] = beta1 * state["m"][i] + (1 - beta1) * g
        state["v"][i] = beta2 * state["v"][i] + (1 - beta2) * g * g
        mhat = state["m"][i] / (1 - beta1**t)
        vhat = state["v"][i] / (1 - beta2**t)
        new = p.astype(np.float64) - lr * mhat / (np.sqrt(vhat) + eps)
        out.append(new.astype(p.dtype))
    return out, state


def _resize_to(patch, side):
    if patch.shape[0] == side and patch.shape[1] == side:
        return np.asarray(patch, dtype=np.float64)
    return resize_bilinear(patch, side, side)


def train_subband(corpus, level, m, cfg):
    """Train one level's encoder on a scene set. Returns (encoder, log rows
    of (epoch, batch, loss)).

    The pyramid depth m determines which bands exist; `level` selects one.
    Scenes are shuffled per epoch; per scene two shared view rectangles crop
    all K selected versions; crops are resized to cfg.train_side.
    """
    if level not in level_list(m):
        raise ValueError(f"level {level} not in the depth-{m} level set")
    rng = SeededRng(child_seed(cfg.seed, level + 2))
    encoder = Encoder(widths=cfg.widths, rng=rng.child(0), input_side=cfg.train_side)
    n_batch, k_batch = cfg.nk_for(level)
    bands = []
    for scene_id, versions in corpus.scenes:
        bands.append([level_bands(v, m)[level] for v in versions])
    min_dim = min(min(b[0].shape[:2]) for b in bands)
    if min_dim // 2 < 2 ** len(cfg.widths):
        raise ValueError(
            f"level {level} bands ({min_dim}px) too small for view extraction"
        )
    log = []
    if cfg.epochs == 0:
        return encoder, log
    state = adam_init(encoder.params())
    t = 0
    for epoch in range(cfg.epochs):
        erng = rng.child(1 + epoch)
        order = erng.permutation(len(bands))
        for b0 in range(0, len(order), n_batch):
            idx = order[b0 : b0 + n_batch]
            scenes = []
            for si in idx:
                versions = bands[si]
                if len(versions) > k_batch:
                    pick = erng.choice(len(versions), size=k_batch, replace=False)
                    versions = [versions[int(j)] for j in pick]
                vp = make_views(versions, erng, min_side=2 ** len(cfg.widths))
                scenes.append(
                    (
                        [_resize_to(p, cfg.train_side) for p in vp.view1],
                        [_resize_to(p, cfg.train_side) for p in vp.view2],
                    )
                )
            loss, grads = batch_loss_from_patches(
                encoder, scenes, cfg.tau, want_grads=True, negatives=cfg.negatives
            )
            t += 1
            new_params, state = adam_step(
                encoder.params(), grads, state, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, t
            )
            encoder.set_params(new_params)
            log.append((epoch, b0 // n_batch, loss))
    return encoder, log
