"""Subjective-score processing and correlation protocol.

Raw ratings go through per-(subject, session) z-scoring, BT.500-style
subject screening and an affine rescale of per-image means to [0,100].
Predictions are compared to MOS by SRCC (Pearson over average-tied ranks)
and PLCC after a fitted monotone logistic, with scene-disjoint train/test
splits and subject split-half consistency."""

from dataclasses import dataclass

import numpy as np

from .core import SeededRng, child_seed


@dataclass(frozen=True)
class Rating:
    subject: str
    session: str
    image: str
    scene: str
    score: float


@dataclass(frozen=True)
class MosRow:
    image: str
    scene: str
    mos: float
    count: int


def zscore_per_session(rows):
    """Center/scale each (subject, session) group by its own mean and sample
    std. Degenerate groups (size < 2 or zero variance) are dropped and
    reported, not raised."""
    groups = {}
    for r in rows:
        groups.setdefault((r.subject, r.session), []).append(r)
    out = []
    dropped = []
    for key in sorted(groups):
        grp = groups[key]
        scores = np.array([r.score for r in grp], dtype=np.float64)
        std = scores.std(ddof=1) if len(scores) > 1 else 0.0
        if len(scores) < 2 or std == 0.0:
            dropped.append(key)
            continue
        mean = scores.mean()
        for r, s in zip(grp, scores):
            out.append(Rating(r.subject, r.session, r.image, r.scene, (s - mean) / std))
    return out, dropped


def _kurtosis(values):
    m = values.mean()
    d = values - m
    m2 = np.mean(d**2)
    if m2 == 0.0:
        return 3.0
    return float(np.mean(d**4) / m2**2)


def bt500_outlier_reject(rows):
    """Screen subjects whose ratings stray beyond per-image excursion bands
    too often and roughly symmetrically.

    Per image: band is mean +- 2*std when the rating kurtosis is in [2,4]
    (near-Gaussian), else mean +- sqrt(20)*std. A subject is rejected when
    excursions P (above) and Q (below) satisfy (P+Q)/ratings > 0.05 and
    |(P-Q)/(P+Q)| < 0.3."""
    subjects = sorted({r.subject for r in rows})
    if len(subjects) < 3:
        raise ValueError(f"need at least 3 subjects, got {len(subjects)}")
    by_image = {}
    for r in rows:
        by_image.setdefault(r.image, []).append(r)
    p_count = {s: 0 for s in subjects}
    q_count = {s: 0 for s in subjects}
    n_count = {s: 0 for s in subjects}
    for image in sorted(by_image):
        grp = by_image[image]
        vals = np.array([r.score for r in grp], dtype=np.float64)
        mean = vals.mean()
        std = vals.std(ddof=1) if len(vals) > 1 else 0.0
        mult = 2.0 if 2.0 <= _kurtosis(vals) <= 4.0 else np.sqrt(20.0)
        hi, lo = mean + mult * std, mean - mult * std
        for r in grp:
            n_count[r.subject] += 1
            if r.score > hi:
                p_count[r.subject] += 1
            elif r.score < lo:
                q_count[r.subject] += 1
    rejected = []
    for s in subjects:
        p, q, n = p_count[s], q_count[s], n_count[s]
        if n == 0 or p + q == 0:
            continue
        if (p + q) / n > 0.05 and abs((p - q) / (p + q)) < 0.3:
            rejected.append(s)
    kept = [r for r in rows if r.subject not in set(rejected)]
    return kept, rejected


def rescale_mos(rows):
    """Per-image mean of z-scores, affinely mapped so the extremes land on
    0 and 100."""
    if not rows:
        raise ValueError("empty rating table")
    by_image = {}
    for r in rows:
        by_image.setdefault(r.image, []).append(r)
    if len(by_image) < 2:
        raise ValueError("need at least 2 images to rescale")
    means = {img: np.mean([r.score for r in grp]) for img, grp in by_image.items()}
    lo, hi = min(means.values()), max(means.values())
    if hi == lo:
        raise ValueError("all image means identical: degenerate rescale")
    out = []
    for img in sorted(by_image):
        grp = by_image[img]
        mos = 100.0 * (means[img] - lo) / (hi - lo)
        out.append(MosRow(image=img, scene=grp[0].scene, mos=float(mos), count=len(grp)))
    return out


def _average_ranks(v):
    v = np.asarray(v, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    ranks = np.empty(len(v), dtype=np.float64)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    den = np.sqrt((xc**2).sum() * (yc**2).sum())
    if den == 0.0:
        raise ValueError("constant input: correlation undefined")
    return float((xc * yc).sum() / den)


def srcc(x, y):
    """Spearman rank correlation with average ranks for ties."""
    if len(x) != len(y):
        raise ValueError("length mismatch")
    if len(x) < 3:
        raise ValueError("need at least 3 points")
    return pearson(_average_ranks(x), _average_ranks(y))


@dataclass
class LogisticFit:
    plcc: float
    params: tuple
    converged: bool
    mapped: np.ndarray


def _sigmoid(t):
    # exp overflow saturates to the correct 0/1 limit; keep it quiet
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-t))


def _logistic4(params, s):
    b1, b2, b3, b4 = params
    return b2 + (b1 - b2) * _sigmoid((s - b3) / abs(b4))


def _logistic5(params, s):
    b1, b2, b3, b4, b5 = params
    return b1 * (0.5 - _sigmoid(-b2 * (s - b3))) + b4 * s + b5


def _jac4(params, s):
    b1, b2, b3, b4 = params
    l = _sigmoid((s - b3) / abs(b4))
    core = (b1 - b2) * l * (1.0 - l)
    return np.stack(
        [l, 1.0 - l, -core / abs(b4), -core * (s - b3) / (b4 * abs(b4))], axis=1
    )


def _jac5(params, s):
    b1, b2, b3, b4, b5 = params
    l = _sigmoid(-b2 * (s - b3))
    dl = l * (1.0 - l)
    return np.stack(
        [
            0.5 - l,
            b1 * dl * (s - b3),
            -b1 * dl * b2,
            s,
            np.ones_like(s),
        ],
        axis=1,
    )


def _gauss_newton(fun, jac, params, s, y, iters=200):
    params = np.array(params, dtype=np.float64)
    resid = fun(params, s) - y
    sse = float(resid @ resid)
    lam = 1e-3
    for _ in range(iters):
        j = jac(params, s)
        g = j.T @ resid
        h = j.T @ j
        accepted = False
        for _ in range(10):
            try:
                step = np.linalg.solve(h + lam * np.eye(len(params)), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = params + step
            r2 = fun(cand, s) - y
            sse2 = float(r2 @ r2)
            if np.isfinite(sse2) and sse2 <= sse:
                improved = sse - sse2
                params, resid, sse = cand, r2, sse2
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        if improved <= 1e-14 * max(sse, 1.0):
            break
    return params, sse


def plcc_logistic(pred, mos, five=False):
    """Pearson correlation after fitting a monotone logistic from prediction
    to MOS. Predictions are standardized internally, which makes the result
    exactly invariant to positive-affine prediction transforms.

    Eight deterministic starts (orientation x center x slope) feed a damped
    Gauss-Newton; if no start yields a usable mapping, the raw Pearson is
    returned flagged as unconverged."""
    s = np.asarray(pred, dtype=np.float64)
    y = np.asarray(mos, dtype=np.float64)
    if len(s) != len(y):
        raise ValueError("length mismatch")
    if len(s) < 5:
        raise ValueError("need at least 5 points")
    if s.std() == 0.0:
        raise ValueError("constant predictions")
    if y.std() == 0.0:
        raise ValueError("constant MOS")
    sn = (s - s.mean()) / s.std()
    lo, hi = float(y.min()), float(y.max())
    med = float(np.median(sn))
    fun, jac = (_logistic5, _jac5) if five else (_logistic4, _jac4)
    starts = []
    for b1, b2 in ((hi, lo), (lo, hi)):
        for b3 in (0.0, med):
            for b4 in (1.0, 0.25):
                if five:
                    slope = 1.0 if b1 >= b2 else -1.0
                    starts.append((hi - lo, slope / b4, b3, 0.0, y.mean()))
                else:
                    starts.append((b1, b2, b3, b4))
    best = None
    for p0 in starts:
        params, sse = _gauss_newton(fun, jac, p0, sn, y)
        if best is None or sse < best[1]:
            best = (params, sse)
    params, _ = best
    mapped = fun(params, sn)
    if np.all(np.isfinite(mapped)) and mapped.std() > 0.0:
        return LogisticFit(
            plcc=pearson(mapped, y), params=tuple(params), converged=True, mapped=mapped
        )
    return LogisticFit(
        plcc=pearson(s, y), params=tuple(params), converged=False, mapped=s.copy()
    )


@dataclass
class SplitEval:
    median_srcc: float
    std_srcc: float
    median_plcc: float
    std_plcc: float
    srcc_values: list
    plcc_values: list
    test_scenes: list
    train_scenes: list


def scene_split_eval(pred_by_image, mos_rows, splits=100, train_frac=0.8, seed=0):
    """Median/std of SRCC and PLCC over scene-disjoint 80/20 splits; the
    (training-free) metric is evaluated on each split's test images only."""
    scenes = sorted({r.scene for r in mos_rows})
    if len(scenes) < 5:
        raise ValueError(f"need at least 5 scenes, got {len(scenes)}")
    rows = [r for r in mos_rows if r.image in pred_by_image]
    if len(rows) < len(mos_rows):
        raise ValueError("predictions missing for some images")
    n_train = int(round(train_frac * len(scenes)))
    n_train = min(max(n_train, 1), len(scenes) - 1)
    srccs, plccs, tests, trains = [], [], [], []
    for i in range(splits):
        rng = SeededRng(child_seed(seed, i))
        perm = rng.permutation(len(scenes))
        train = {scenes[j] for j in perm[:n_train]}
        test = {scenes[j] for j in perm[n_train:]}
        test_rows = [r for r in rows if r.scene in test]
        pred = [pred_by_image[r.image] for r in test_rows]
        mos = [r.mos for r in test_rows]
        srccs.append(srcc(pred, mos))
        plccs.append(plcc_logistic(pred, mos).plcc)
        tests.append(test)
        trains.append(train)
    return SplitEval(
        median_srcc=float(np.median(srccs)),
        std_srcc=float(np.std(srccs)),
        median_plcc=float(np.median(plccs)),
        std_plcc=float(np.std(plccs)),
        srcc_values=srccs,
        plcc_values=plccs,
        test_scenes=tests,
        train_scenes=trains,
    )


def split_half_consistency(rows, trials=100, seed=0):
    """Median Pearson correlation between per-image mean scores of two random
    halves of the subject population."""
    subjects = sorted({r.subject for r in rows})
    if len(subjects) < 4:
        raise ValueError(f"need at least 4 subjects, got {len(subjects)}")
    by_subject = {}
    for r in rows:
        by_subject.setdefault(r.subject, {}).setdefault(r.image, []).append(r.score)
    images = sorted({r.image for r in rows})
    vals = []
    for t in range(trials):
        rng = SeededRng(child_seed(seed, t))
        perm = rng.permutation(len(subjects))
        half = len(subjects) // 2
        ha = [subjects[j] for j in perm[:half]]
        hb = [subjects[j] for j in perm[half : 2 * half]]
        mos_a, mos_b = [], []
        for img in images:
            a = [np.mean(by_subject[s][img]) for s in ha if img in by_subject[s]]
            b = [np.mean(by_subject[s][img]) for s in hb if img in by_subject[s]]
            if a and b:
                mos_a.append(np.mean(a))
                mos_b.append(np.mean(b))
        vals.append(pearson(mos_a, mos_b))
    return float(np.median(vals))
