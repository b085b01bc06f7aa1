"""Command-line pipeline: corpus | train | pristine | score | eval | mos.

Configuration is a flat key=value namespace layered as
defaults < config file < MSQALE_* environment < flags; every run writes the
fully resolved configuration next to its outputs so results are replayable.
CSV outputs carry a `# msqale-csv v1` header line.
"""

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .core import SceneSet, load_image, save_image
from .corpus import build_training_corpus, make_toy_scenes, write_manifest
from .encoder import load_weights, save_weights
from .evaluation import (
    MosRow,
    Rating,
    bt500_outlier_reject,
    plcc_logistic,
    rescale_mos,
    scene_split_eval,
    srcc,
    zscore_per_session,
)
from .levels import level_list, level_name
from .pristine import PristineConfig, load_pristine_model, save_pristine_model
from .scorer import build_pristine_model, score_image
from .trainer import TrainConfig, full_nk, train_subband

CSV_HEADER = "# msqale-csv v1"

# key: (type, default) for the layered configuration
CONFIG_KEYS = {
    "seed": (int, 0),
    "scenes": (int, 8),
    "scene_side": (int, 160),
    "k": (int, 4),
    "m": (int, 1),
    "tau": (float, 0.1),
    "epochs": (int, 15),
    "lr": (float, 1e-3),
    "train_side": (int, 64),
    "widths": (str, "16,32,64"),
    "negatives": (str, "same_scene"),
    "full_nk": (bool, False),
    "jobs": (int, 1),
    "patch_side": (int, 32),
    "tau_s": (float, 0.3),
    "tau_c": (float, 0.8),
    "pca_dim": (int, 0),
    "per_image_thresholds": (bool, True),
    "features": (str, "msqale"),
    "splits": (int, 100),
    "train_frac": (float, 0.8),
    "logistic5": (bool, False),
}


def _parse_value(key, raw):
    typ = CONFIG_KEYS[key][0]
    if typ is bool:
        if str(raw).lower() in ("1", "true", "yes", "on"):
            return True
        if str(raw).lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"bad boolean for {key}: {raw!r}")
    return typ(raw)


def resolve_config(config_path, flag_values):
    cfg = {k: d for k, (_, d) in CONFIG_KEYS.items()}
    if config_path:
        with open(config_path) as fh:
            for ln, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"{config_path}:{ln}: expected key=value")
                key, raw = (t.strip() for t in line.split("=", 1))
                if key not in CONFIG_KEYS:
                    raise ValueError(f"{config_path}:{ln}: unknown key {key!r}")
                cfg[key] = _parse_value(key, raw)
    for key in CONFIG_KEYS:
        env = os.environ.get(f"MSQALE_{key.upper()}")
        if env is not None:
            cfg[key] = _parse_value(key, env)
    for key, val in flag_values.items():
        if val is not None:
            cfg[key] = val
    return cfg


def make_run_dir(out, tag):
    if out:
        path = out
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        path = os.path.join("runs", f"{stamp}-{tag}")
    os.makedirs(path, exist_ok=True)
    os.makedirs(os.path.join(path, "logs"), exist_ok=True)
    return path


def write_resolved(run_dir, cfg):
    with open(os.path.join(run_dir, "config.resolved"), "w") as fh:
        for key in sorted(cfg):
            fh.write(f"{key}={cfg[key]}\n")


def _fmt(x):
    return repr(float(x))


def write_csv(path, header_cols, rows):
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        fh.write(",".join(header_cols) + "\n")
        for row in rows:
            fh.write(",".join(str(c) for c in row) + "\n")


def read_csv(path):
    rows = []
    with open(path) as fh:
        lines = [l.rstrip("\n") for l in fh if l.strip() and not l.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty csv")
    cols = lines[0].split(",")
    for line in lines[1:]:
        vals = line.split(",")
        if len(vals) != len(cols):
            raise ValueError(f"{path}: ragged row {line!r}")
        rows.append(dict(zip(cols, vals)))
    return rows


# ---------------------------------------------------------------------------
# subcommands


def _load_bases(cfg, bases_dir):
    if bases_dir:
        names = sorted(
            f for f in os.listdir(bases_dir) if f.endswith((".png", ".ppm", ".pnm"))
        )
        if not names:
            raise ValueError(f"no images under {bases_dir}")
        return [
            (os.path.splitext(n)[0], load_image(os.path.join(bases_dir, n)))
            for n in names
        ]
    return make_toy_scenes(cfg["scenes"], side=cfg["scene_side"], seed=cfg["seed"])


def cmd_corpus(args):
    cfg = resolve_config(args.config, {"scenes": args.scenes, "k": args.k, "seed": args.seed, "scene_side": args.scene_side})
    run_dir = make_run_dir(args.out, "corpus")
    bases = _load_bases(cfg, args.bases)
    scene_set, manifest = build_training_corpus(bases, cfg["k"], cfg["seed"])
    base_dir = os.path.join(run_dir, "bases")
    os.makedirs(base_dir, exist_ok=True)
    for scene_id, img in bases:
        save_image(img, os.path.join(base_dir, f"{scene_id}.png"))
    corpus_dir = os.path.join(run_dir, "corpus")
    for scene_id, versions in scene_set.scenes:
        sdir = os.path.join(corpus_dir, scene_id)
        os.makedirs(sdir, exist_ok=True)
        for v, img in enumerate(versions):
            save_image(img, os.path.join(sdir, f"{v}.png"))
    write_manifest(os.path.join(run_dir, "manifest.json"), manifest)
    rows = []
    for sc in manifest["scenes"]:
        for mv in sc["versions"]:
            sev = (
                0.0
                if not mv["chain"]
                else float(np.mean([c["severity"] for c in mv["chain"]]))
            )
            rows.append(
                (
                    f"{sc['scene_id']}/{mv['index']}.png",
                    sc["scene_id"],
                    _fmt(100.0 * (1.0 - sev)),
                )
            )
    rows.sort(key=lambda r: r[0])
    write_csv(os.path.join(run_dir, "pseudo_mos.csv"), ["image_id", "scene_id", "mos"], rows)
    write_resolved(run_dir, cfg)
    print(f"corpus: {scene_set.n} scenes x {scene_set.k} versions under {run_dir}")
    return 0


def load_corpus_dir(path):
    scene_ids = sorted(
        d for d in os.listdir(path) if os.path.isdir(os.path.join(path, d))
    )
    if not scene_ids:
        raise ValueError(f"no scene directories under {path}")
    scenes = []
    for sid in scene_ids:
        sdir = os.path.join(path, sid)
        files = sorted(
            (f for f in os.listdir(sdir) if f.endswith(".png")),
            key=lambda f: int(os.path.splitext(f)[0]),
        )
        scenes.append((sid, [load_image(os.path.join(sdir, f)) for f in files]))
    return SceneSet(scenes=scenes)


def _train_config(cfg):
    widths = tuple(int(w) for w in cfg["widths"].split(","))
    schedule = {}
    if cfg["full_nk"]:
        schedule = {lv: full_nk(lv) for lv in level_list(cfg["m"])}
    return TrainConfig(
        tau=cfg["tau"],
        epochs=cfg["epochs"],
        lr=cfg["lr"],
        seed=cfg["seed"],
        train_side=cfg["train_side"],
        widths=widths,
        schedule=schedule,
        negatives=cfg["negatives"],
    )


def cmd_train(args):
    cfg = resolve_config(
        args.config,
        {
            "m": args.m,
            "epochs": args.epochs,
            "lr": args.lr,
            "tau": args.tau,
            "seed": args.seed,
            "train_side": args.train_side,
            "widths": args.widths,
            "negatives": args.negatives,
            "full_nk": args.full_nk,
            "jobs": args.jobs,
        },
    )
    run_dir = make_run_dir(args.out, "train")
    corpus = load_corpus_dir(args.corpus)
    tcfg = _train_config(cfg)
    weights_dir = os.path.join(run_dir, "weights")
    os.makedirs(weights_dir, exist_ok=True)
    levels = level_list(cfg["m"])

    def train_one(level):
        enc, log = train_subband(corpus, level, cfg["m"], tcfg)
        name = level_name(level)
        save_weights(
            os.path.join(weights_dir, f"{name}.msqw"), enc, subband=level, epoch=tcfg.epochs
        )
        write_csv(
            os.path.join(weights_dir, f"{name}_loss.csv"),
            ["epoch", "batch", "loss"],
            [(e, b, _fmt(l)) for e, b, l in log],
        )
        return level, (log[-1][2] if log else float("nan"))

    if cfg["jobs"] > 1:
        with ThreadPoolExecutor(max_workers=cfg["jobs"]) as pool:
            results = list(pool.map(train_one, levels))
    else:
        results = [train_one(lv) for lv in levels]
    write_resolved(run_dir, cfg)
    for level, last in results:
        print(f"trained {level_name(level)}: final loss {last:.4f}")
    return 0


def load_encoders(weights_dir):
    encoders = {}
    for name in sorted(os.listdir(weights_dir)):
        if name.endswith(".msqw"):
            enc, level, _ = load_weights(os.path.join(weights_dir, name))
            encoders[level] = enc
    if not encoders:
        raise ValueError(f"no weight files under {weights_dir}")
    return encoders


def cmd_pristine(args):
    cfg = resolve_config(
        args.config,
        {
            "patch_side": args.patch_side,
            "tau_s": args.tau_s,
            "tau_c": args.tau_c,
            "pca_dim": args.pca_dim,
            "features": args.features,
            "per_image_thresholds": args.per_image,
        },
    )
    run_dir = make_run_dir(args.out, "pristine")
    names = sorted(f for f in os.listdir(args.bases) if f.endswith((".png", ".ppm")))
    images = [load_image(os.path.join(args.bases, n)) for n in names]
    pcfg = PristineConfig(
        patch_side=cfg["patch_side"],
        tau_s=cfg["tau_s"],
        tau_c=cfg["tau_c"],
        d=cfg["pca_dim"],
        per_image=cfg["per_image_thresholds"],
    )
    encoders = load_encoders(args.weights) if cfg["features"] == "msqale" else None
    model = build_pristine_model(images, pcfg, provider=cfg["features"], encoders=encoders)
    save_pristine_model(os.path.join(run_dir, "pristine.model"), model)
    write_resolved(run_dir, cfg)
    print(
        f"pristine model: {model.provider} features, dim {model.feature_dim} -> {model.pca.d}"
    )
    return 0


def _collect_images(root):
    found = []
    for base, _, files in os.walk(root):
        for f in sorted(files):
            if f.endswith((".png", ".ppm", ".pnm")):
                full = os.path.join(base, f)
                found.append((os.path.relpath(full, root), full))
    if not found:
        raise ValueError(f"no images under {root}")
    return sorted(found)


def cmd_score(args):
    cfg = resolve_config(args.config, {})
    run_dir = make_run_dir(args.out, "score")
    model = load_pristine_model(args.model)
    encoders = load_encoders(args.weights) if model.provider == "msqale" else None
    rows = []
    for image_id, path in _collect_images(args.images):
        img = load_image(path)
        score = score_image(img, model, encoders)
        rows.append((image_id, _fmt(score.q), score.patch_count))
    write_csv(os.path.join(run_dir, "scores.csv"), ["image_id", "q", "patch_count"], rows)
    write_resolved(run_dir, cfg)
    print(f"scored {len(rows)} images -> {os.path.join(run_dir, 'scores.csv')}")
    return 0


def cmd_eval(args):
    cfg = resolve_config(
        args.config,
        {"splits": args.splits, "train_frac": args.train_frac, "seed": args.seed, "logistic5": args.logistic5},
    )
    run_dir = make_run_dir(args.out, "eval")
    score_rows = read_csv(args.scores)
    mos_rows_raw = read_csv(args.mos)
    pred = {r["image_id"]: -float(r["q"]) for r in score_rows}
    mos_rows = [
        MosRow(image=r["image_id"], scene=r["scene_id"], mos=float(r["mos"]), count=1)
        for r in mos_rows_raw
        if r["image_id"] in pred
    ]
    if len(mos_rows) < len(mos_rows_raw):
        missing = len(mos_rows_raw) - len(mos_rows)
        print(f"note: {missing} MOS rows lack scores and were skipped")
    scenes = {r.scene for r in mos_rows}
    if cfg["splits"] > 0 and len(scenes) >= 5:
        ev = scene_split_eval(
            pred,
            mos_rows,
            splits=cfg["splits"],
            train_frac=cfg["train_frac"],
            seed=cfg["seed"],
        )
        row = (
            "scores",
            _fmt(ev.median_srcc),
            _fmt(ev.std_srcc),
            _fmt(ev.median_plcc),
            _fmt(ev.std_plcc),
        )
    else:
        preds = [pred[r.image] for r in mos_rows]
        mos = [r.mos for r in mos_rows]
        row = (
            "scores",
            _fmt(srcc(preds, mos)),
            _fmt(0.0),
            _fmt(plcc_logistic(preds, mos, five=cfg["logistic5"]).plcc),
            _fmt(0.0),
        )
    write_csv(
        os.path.join(run_dir, "eval.csv"),
        ["metric", "median_srcc", "std_srcc", "median_plcc", "std_plcc"],
        [row],
    )
    write_resolved(run_dir, cfg)
    print(
        f"eval: srcc {row[1]} plcc {row[3]} -> {os.path.join(run_dir, 'eval.csv')}"
    )
    return 0


def cmd_mos(args):
    cfg = resolve_config(args.config, {})
    run_dir = make_run_dir(args.out, "mos")
    raw = read_csv(args.ratings)
    rows = [
        Rating(
            subject=r["subject_id"],
            session=r["session_id"],
            image=r["image_id"],
            scene=r["scene_id"],
            score=float(r["score"]),
        )
        for r in raw
    ]
    z, dropped = zscore_per_session(rows)
    for key in dropped:
        print(f"note: dropped degenerate rating group subject={key[0]} session={key[1]}")
    kept, rejected = bt500_outlier_reject(z)
    for s in rejected:
        print(f"note: rejected subject {s}")
    mos_rows = rescale_mos(kept)
    write_csv(
        os.path.join(run_dir, "mos.csv"),
        ["image_id", "scene_id", "mos", "count"],
        [(r.image, r.scene, _fmt(r.mos), r.count) for r in mos_rows],
    )
    write_resolved(run_dir, cfg)
    print(f"mos: {len(mos_rows)} images, {len(rejected)} subjects rejected")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="msqale",
        description="Unsupervised subband-contrastive image quality pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--out", help="run directory (default runs/<stamp>-<tag>)")

    p = sub.add_parser("corpus", help="generate a distorted scene corpus")
    common(p)
    p.add_argument("--bases", help="directory of well-lit base images (default: toy scenes)")
    p.add_argument("--scenes", type=int)
    p.add_argument("--scene-side", dest="scene_side", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_corpus)

    p = sub.add_parser("train", help="train per-level encoders")
    common(p)
    p.add_argument("--corpus", required=True, help="corpus directory (scene subdirs)")
    p.add_argument("--m", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--train-side", dest="train_side", type=int)
    p.add_argument("--widths")
    p.add_argument("--negatives", choices=["same_scene", "cross_scene"])
    p.add_argument("--full-nk", dest="full_nk", action="store_const", const=True)
    p.add_argument("--jobs", type=int)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("pristine", help="build the pristine reference model")
    common(p)
    p.add_argument("--bases", required=True, help="directory of well-lit images")
    p.add_argument("--weights", help="weights directory (msqale features)")
    p.add_argument("--features", choices=["msqale", "nss"])
    p.add_argument("--patch-side", dest="patch_side", type=int)
    p.add_argument("--tau-s", dest="tau_s", type=float)
    p.add_argument("--tau-c", dest="tau_c", type=float)
    p.add_argument("--pca-dim", dest="pca_dim", type=int)
    p.add_argument(
        "--global-thresholds",
        dest="per_image",
        action="store_const",
        const=False,
        help="compare patch indices against corpus-global maxima",
    )
    p.set_defaults(fn=cmd_pristine, per_image=None)

    p = sub.add_parser("score", help="score images against a pristine model")
    common(p)
    p.add_argument("--images", required=True, help="directory tree of images")
    p.add_argument("--model", required=True, help="pristine.model path")
    p.add_argument("--weights", help="weights directory (msqale features)")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("eval", help="correlate scores with MOS")
    common(p)
    p.add_argument("--scores", required=True)
    p.add_argument("--mos", required=True)
    p.add_argument("--splits", type=int)
    p.add_argument("--train-frac", dest="train_frac", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--logistic5", action="store_const", const=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("mos", help="process raw ratings into MOS")
    common(p)
    p.add_argument("--ratings", required=True)
    p.set_defaults(fn=cmd_mos)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
