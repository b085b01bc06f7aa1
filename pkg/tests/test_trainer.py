import numpy as np
import pytest
from scipy.stats import chisquare

from msqale.core import SeededRng, child_seed
from msqale.corpus import build_training_corpus, make_toy_scenes
from msqale.encoder import Encoder
from msqale.trainer import (
    TrainConfig,
    adam_init,
    adam_step,
    anchor_loss,
    batch_loss,
    batch_loss_and_grads,
    batch_loss_from_patches,
    cosine_similarity,
    default_nk,
    encode_views,
    make_views,
    full_nk,
    scene_loss_and_grads,
    train_subband,
)
from oracles import softmax_ce

TAU = 0.1


# ---------------------------------------------------------------------------
# view construction


def test_make_views_landscape_halves_forced():
    # 100 wide x 50 tall, seed 1 draws the vertical split; each 50x50 half
    # admits exactly one largest square
    versions = [np.zeros((50, 100, 3)), np.ones((50, 100, 3))]
    vp = make_views(versions, SeededRng(1))
    assert vp.rect1 == (0, 0, 50)
    assert vp.rect2 == (50, 0, 50)
    assert vp.view1[0].shape == (50, 50, 3)
    assert np.all(vp.view2[1] == 1.0)


def test_make_views_deterministic(rng):
    versions = [rng.random((40, 60, 3)) for _ in range(3)]
    a = make_views(versions, SeededRng(17))
    b = make_views(versions, SeededRng(17))
    assert a.rect1 == b.rect1 and a.rect2 == b.rect2


def test_make_views_rects_disjoint_and_shared(rng):
    versions = [rng.random((33, 47, 3)) for _ in range(4)]
    for seed in range(50):
        vp = make_views(versions, SeededRng(seed), min_side=4)
        (x1, y1, s1), (x2, y2, s2) = vp.rect1, vp.rect2
        no_x = x1 + s1 <= x2 or x2 + s2 <= x1
        no_y = y1 + s1 <= y2 or y2 + s2 <= y1
        assert no_x or no_y
        for k in range(4):
            assert np.array_equal(vp.view1[k], versions[k][y1 : y1 + s1, x1 : x1 + s1])


def test_make_views_offsets_uniform():
    versions = [np.zeros((10, 20, 3)), np.zeros((10, 20, 3))]
    offsets = []
    for seed in range(2000):
        vp = make_views(versions, SeededRng(seed), min_side=2)
        if vp.rect1[2] == 5:  # horizontal split: 20x5 halves, xo in 0..15
            offsets += [vp.rect1[0], vp.rect2[0]]
    counts = np.bincount(offsets, minlength=16)
    assert counts.sum() > 1500
    assert chisquare(counts).pvalue > 0.01


def test_make_views_validation(rng):
    with pytest.raises(ValueError):
        make_views([rng.random((20, 20, 3))], SeededRng(0))
    with pytest.raises(ValueError):
        make_views([rng.random((20, 20, 3)), rng.random((20, 21, 3))], SeededRng(0))
    with pytest.raises(ValueError):
        make_views([rng.random((8, 8, 3))] * 2, SeededRng(0), min_side=8)


# ---------------------------------------------------------------------------
# similarities and losses


def test_cosine_similarity_cases():
    assert abs(cosine_similarity([1.0, 2.0], [1.0, 2.0]) - 1.0) < 1e-12
    assert abs(cosine_similarity([1.0, 0.0], [0.0, 3.0])) < 1e-12
    assert abs(cosine_similarity([1.0, 0.0], [1.0, 1.0]) - 1 / np.sqrt(2)) < 1e-12
    with pytest.raises(ValueError):
        cosine_similarity([0.0, 0.0], [1.0, 0.0])


def test_anchor_loss_no_negatives_is_zero():
    assert anchor_loss([1.0, 0.0], [0.5, 0.5], [], TAU) == 0.0


def test_anchor_loss_uniform_is_log_k():
    anchor = np.array([1.0, 0.0])
    cand = np.array([0.6, 0.8])
    for k in (2, 4, 8):
        loss = anchor_loss(anchor, cand, [cand] * (k - 1), TAU)
        assert abs(loss - np.log(k)) < 1e-12


def test_anchor_loss_hand_case_matches_softmax():
    # unit-norm embeddings with the stated similarities to the anchor
    anchor = np.array([1.0, 0.0])
    pos = np.array([0.9, np.sqrt(1 - 0.81)])
    n1 = np.array([0.1, np.sqrt(1 - 0.01)])
    n2 = np.array([-0.2, np.sqrt(1 - 0.04)])
    loss = anchor_loss(anchor, pos, [n1, n2], TAU)
    assert abs(loss - softmax_ce([0.9, 0.1, -0.2], TAU)) < 1e-12


def test_anchor_loss_nonnegative_and_monotone(rng):
    negs = [rng.standard_normal(4) for _ in range(3)]
    anchor = rng.standard_normal(4)
    weak = anchor + 2.0 * rng.standard_normal(4)
    strong = anchor.copy()
    l_weak = anchor_loss(anchor, weak, negs, TAU)
    l_strong = anchor_loss(anchor, strong, negs, TAU)
    assert l_weak >= 0.0 and l_strong >= 0.0
    assert l_strong < l_weak


def test_anchor_loss_requires_positive_tau():
    with pytest.raises(ValueError):
        anchor_loss([1.0, 0.0], [1.0, 0.0], [], 0.0)


def test_batch_loss_k1_degenerates_to_zero(rng):
    z = rng.standard_normal((1, 4))
    assert batch_loss([(z, z.copy())], TAU) == 0.0


def test_batch_loss_uniform_is_twice_log_k(rng):
    # identical rows make every similarity coincide; the Eq-style double sum
    # normalized by N*K then equals 2 ln K
    u = rng.standard_normal(6)
    v = rng.standard_normal(6)
    for k in (2, 4, 8):
        z1 = np.tile(u, (k, 1))
        z2 = np.tile(v, (k, 1))
        assert abs(batch_loss([(z1, z2)], TAU) - 2 * np.log(k)) < 1e-12


def test_batch_loss_termwise_oracle(rng):
    z1 = rng.standard_normal((2, 5))
    z2 = rng.standard_normal((2, 5))
    total = 0.0
    for k in range(2):
        total += anchor_loss(z1[k], z2[k], [z2[j] for j in range(2) if j != k], TAU)
        total += anchor_loss(z2[k], z1[k], [z1[j] for j in range(2) if j != k], TAU)
    assert abs(batch_loss([(z1, z2)], TAU) - total / 2.0) < 1e-12


def test_batch_loss_scale_invariant(rng):
    z1 = rng.standard_normal((3, 4))
    z2 = rng.standard_normal((3, 4))
    base = batch_loss([(z1, z2)], TAU)
    scaled = batch_loss([(7.3 * z1, 7.3 * z2)], TAU)
    assert abs(base - scaled) < 1e-12


def test_batch_loss_validates():
    with pytest.raises(ValueError):
        batch_loss([], TAU)
    z2 = np.ones((2, 3))
    z3 = np.ones((3, 3))
    with pytest.raises(ValueError):
        batch_loss([(z2, z2), (z3, z3)], TAU)


def test_scene_loss_grads_match_finite_difference(rng):
    z1 = rng.standard_normal((3, 4))
    z2 = rng.standard_normal((3, 4))
    _, dz1, dz2 = scene_loss_and_grads(z1, z2, TAU)
    h = 1e-6
    for z, dz in ((z1, dz1), (z2, dz2)):
        for idx in np.ndindex(z.shape):
            orig = z[idx]
            z[idx] = orig + h
            lp, _, _ = scene_loss_and_grads(z1, z2, TAU)
            z[idx] = orig - h
            lm, _, _ = scene_loss_and_grads(z1, z2, TAU)
            z[idx] = orig
            fd = (lp - lm) / (2 * h)
            assert abs(dz[idx] - fd) < 1e-5


def test_batch_loss_and_grads_consistent(rng):
    embeds = [
        (rng.standard_normal((2, 4)), rng.standard_normal((2, 4))) for _ in range(3)
    ]
    loss, grads = batch_loss_and_grads(embeds, TAU)
    assert abs(loss - batch_loss(embeds, TAU)) < 1e-12
    assert len(grads) == 3


def test_cross_scene_pool_differs_from_same_scene(rng):
    enc = Encoder(widths=(4, 6), rng=SeededRng(0), input_side=8)
    scenes = [
        ([rng.random((8, 8, 3)) for _ in range(2)], [rng.random((8, 8, 3)) for _ in range(2)])
        for _ in range(2)
    ]
    same = batch_loss_from_patches(enc, scenes, TAU, negatives="same_scene")
    cross = batch_loss_from_patches(enc, scenes, TAU, negatives="cross_scene")
    assert same != cross
    assert cross > same  # more candidates per anchor can only add mass
    with pytest.raises(ValueError):
        batch_loss_from_patches(enc, scenes, TAU, negatives="both")


def test_encode_views_shapes(rng):
    enc = Encoder(widths=(4,), rng=SeededRng(0), input_side=8)
    scenes = [([rng.random((8, 8, 3))] * 2, [rng.random((8, 8, 3))] * 2)]
    embeds = encode_views(enc, scenes)
    assert embeds[0][0].shape == (2, 4)


# ---------------------------------------------------------------------------
# optimizer


def test_adam_zero_gradient_no_move():
    p = [np.array([1.0, -2.0])]
    state = adam_init(p)
    out, _ = adam_step(p, [np.zeros(2)], state, 0.1, 0.9, 0.999, 1e-8, 1)
    assert np.array_equal(out[0], p[0])


def test_adam_first_step_hand_value():
    p = [np.array([0.0])]
    state = adam_init(p)
    out, _ = adam_step(p, [np.array([1.0])], state, 0.1, 0.9, 0.999, 1e-8, 1)
    # bias correction makes mhat = vhat = 1 on step 1
    assert abs(out[0][0] - (-0.1 / (1.0 + 1e-8))) < 1e-12


def test_adam_two_steps_match_scalar_reference():
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    g = 0.7
    m = v = 0.0
    x_ref = 0.3
    for t in (1, 2):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        x_ref -= lr * mhat / (np.sqrt(vhat) + eps)
    p = [np.array([0.3])]
    state = adam_init(p)
    for t in (1, 2):
        p, state = adam_step(p, [np.array([g])], state, lr, b1, b2, eps, t)
    assert abs(p[0][0] - x_ref) < 1e-12


def test_adam_validates():
    p = [np.zeros(2)]
    state = adam_init(p)
    with pytest.raises(ValueError):
        adam_step(p, [np.zeros(3)], state, 0.1, 0.9, 0.999, 1e-8, 1)
    with pytest.raises(ValueError):
        adam_step(p, [np.zeros(2)], state, 0.1, 0.9, 0.999, 1e-8, 0)


def test_adam_keeps_param_dtype():
    p = [np.zeros(2, dtype=np.float32)]
    state = adam_init(p)
    out, _ = adam_step(p, [np.ones(2)], state, 0.1, 0.9, 0.999, 1e-8, 1)
    assert out[0].dtype == np.float32


# ---------------------------------------------------------------------------
# schedules and full training


def test_nk_schedules():
    assert default_nk(0) == (2, 4)
    assert default_nk(1) == (2, 4)
    assert default_nk(2) == (4, 4)
    assert default_nk(3) == (8, 4)
    assert default_nk(-1) == (8, 4)
    assert full_nk(0) == (4, 10)
    assert full_nk(-1) == (32, 40)
    cfg = TrainConfig(schedule={0: (1, 2)})
    assert cfg.nk_for(0) == (1, 2)
    assert cfg.nk_for(1) == (2, 4)


@pytest.fixture(scope="module")
def quick_corpus():
    bases = make_toy_scenes(4, side=64, seed=21)
    ss, _ = build_training_corpus(bases, 3, seed=21)
    return ss


def quick_config(seed=0, epochs=1):
    return TrainConfig(
        epochs=epochs,
        seed=seed,
        train_side=16,
        widths=(4, 8),
        schedule={0: (2, 2), 1: (2, 2), -1: (2, 2)},
    )


def test_train_zero_epochs_keeps_init(quick_corpus):
    cfg = quick_config(epochs=0)
    enc, log = train_subband(quick_corpus, 0, 0, cfg)
    assert log == []
    fresh = Encoder(
        widths=cfg.widths,
        rng=SeededRng(child_seed(cfg.seed, 2)).child(0),
        input_side=cfg.train_side,
    )
    for a, b in zip(enc.params(), fresh.params()):
        assert np.array_equal(a, b)


def test_train_deterministic(quick_corpus):
    enc1, log1 = train_subband(quick_corpus, 0, 0, quick_config(seed=5))
    enc2, log2 = train_subband(quick_corpus, 0, 0, quick_config(seed=5))
    assert log1 == log2
    for a, b in zip(enc1.params(), enc2.params()):
        assert np.array_equal(a, b)


def test_train_seed_changes_weights(quick_corpus):
    enc1, _ = train_subband(quick_corpus, 0, 0, quick_config(seed=5))
    enc2, _ = train_subband(quick_corpus, 0, 0, quick_config(seed=6))
    assert any(
        not np.array_equal(a, b) for a, b in zip(enc1.params(), enc2.params())
    )


def test_train_loss_decreases():
    bases = make_toy_scenes(8, side=64, seed=33)
    corpus, _ = build_training_corpus(bases, 4, seed=33)
    cfg = TrainConfig(epochs=8, seed=0, train_side=32, widths=(8, 16))
    enc, log = train_subband(corpus, 0, 0, cfg)
    first = np.mean([l for e, _, l in log if e == 0])
    last = np.mean([l for e, _, l in log if e == max(r[0] for r in log)])
    assert last < first


def test_train_subband_rejects_bad_level(quick_corpus):
    with pytest.raises(ValueError):
        train_subband(quick_corpus, 3, 1, quick_config())


def test_train_subband_rejects_tiny_bands():
    bases = make_toy_scenes(2, side=16, seed=0)
    ss, _ = build_training_corpus(bases, 2, seed=0)
    cfg = TrainConfig(epochs=1, widths=(4, 8, 16, 32), schedule={0: (2, 2)})
    with pytest.raises(ValueError):
        train_subband(ss, 0, 0, cfg)


def test_train_all_levels_of_depth_one(quick_corpus):
    for level in (0, 1, -1):
        enc, log = train_subband(quick_corpus, level, 1, quick_config())
        assert len(log) > 0
        assert np.all(np.isfinite(enc.weights[0]))
