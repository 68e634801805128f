"""Command line interface: extract | train | score | eval | fuse."""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dataio, scoring, training
from .audio import load_audio, segment_clip
from .errors import AdfdError
from .features import DctAxis, RECIPES, config_for_recipe, extract_features

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


class _UsageError(Exception):
    pass


def _load_config(path: str) -> dict[str, str]:
    """Flat 'key = value' lines; '#' starts a comment line."""
    out = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise _UsageError(f"{path}:{line_no}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _cast(value: str, kind, name: str):
    if kind is bool:
        low = value.lower()
        if low in _TRUE_WORDS:
            return True
        if low in _FALSE_WORDS:
            return False
        raise _UsageError(f"config key {name}: boolean expected, got {value!r}")
    try:
        return kind(value)
    except ValueError:
        raise _UsageError(f"config key {name}: cannot parse {value!r}") from None


class _Options:
    """Merged view of flags and config file; flags win."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = _load_config(args.config) if getattr(args, "config", None) else {}

    def get(self, name: str, kind=str, default=None, required: bool = False,
            choices=None):
        value = getattr(self.args, name, None)
        if value is None and name in self.config:
            value = _cast(self.config[name], kind, name)
        if value is None:
            value = default
        if value is None and required:
            raise _UsageError(f"missing required option --{name.replace('_', '-')}")
        if choices is not None and value is not None and value not in choices:
            raise _UsageError(
                f"--{name.replace('_', '-')}: {value!r} not one of {sorted(choices)}")
        return value


def _require_files(paths) -> None:
    missing = [str(p) for p in paths if not Path(p).is_file()]
    if missing:
        raise AdfdError("missing input files: " + ", ".join(missing))


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


# --------------------------------------------------------------------------
# extract
# --------------------------------------------------------------------------

_WORKER_CFG = None


def _extract_init(recipe: str, dct: bool, dct_axis: str):
    global _WORKER_CFG
    _WORKER_CFG = config_for_recipe(recipe, dct=dct, dct_axis=DctAxis(dct_axis))


def _extract_one(task: tuple[str, str]) -> list[tuple[str, int, np.ndarray]]:
    utt_id, wav_path = task
    clip = load_audio(wav_path)
    out = []
    for segment in segment_clip(clip):
        feat = extract_features(segment, _WORKER_CFG)
        out.append((utt_id, feat.seg_index, feat.data))
    return out


def cmd_extract(args) -> int:
    opt = _Options(args)
    protocol = opt.get("protocol", required=True)
    subset = opt.get("subset", default="train", choices=set(dataio.SUBSETS))
    audio_dir = Path(opt.get("audio_dir", required=True))
    recipe = opt.get("spec", required=True, choices=set(RECIPES))
    dct = opt.get("dct", bool, default=False)
    dct_axis = opt.get("dct_axis", default="freq", choices={"freq", "time"})
    out_path = opt.get("out", required=True)
    jobs = opt.get("jobs", int, default=1)
    if jobs < 1:
        raise _UsageError(f"--jobs must be >= 1, got {jobs}")

    _require_files([protocol])
    entries = dataio.parse_protocol(protocol, subset)
    tasks = [(e.utt_id, str(audio_dir / f"{e.utt_id}.wav")) for e in entries]
    _require_files(path for _, path in tasks)

    cfg = config_for_recipe(recipe, dct=dct, dct_axis=DctAxis(dct_axis))
    _info(f"extracting {recipe} features for {len(tasks)} utterances "
          f"(dct={'on' if dct else 'off'}, jobs={jobs})")

    def results():
        if jobs == 1:
            _extract_init(recipe, dct, dct_axis)
            for i, task in enumerate(tasks, 1):
                yield _extract_one(task)
                if i % 200 == 0:
                    _info(f"  {i}/{len(tasks)} utterances")
        else:
            with ProcessPoolExecutor(
                    max_workers=jobs, initializer=_extract_init,
                    initargs=(recipe, dct, dct_axis)) as pool:
                chunk = max(1, len(tasks) // (jobs * 8))
                for i, res in enumerate(pool.map(_extract_one, tasks, chunksize=chunk), 1):
                    yield res
                    if i % 200 == 0:
                        _info(f"  {i}/{len(tasks)} utterances")

    def flat():
        for per_utt in results():
            yield from per_utt

    written = dataio.write_feature_cache(out_path, flat(), cfg.hash64())
    _info(f"wrote {written} segment records for {len(tasks)} utterances to {out_path}")
    return 0


# --------------------------------------------------------------------------
# train
# --------------------------------------------------------------------------

def _cache_examples(cache_path, protocol_path, subset):
    entries = dataio.parse_protocol(protocol_path, subset)
    labels = dataio.keys_by_utt(entries)
    cache = dataio.read_feature_cache(cache_path)
    by_utt: dict[str, list] = {}
    for utt_id, seg_index, tensor in cache.records:
        by_utt.setdefault(utt_id, []).append((seg_index, tensor))
    missing = [e.utt_id for e in entries if e.utt_id not in by_utt]
    if missing:
        raise AdfdError(
            f"{cache_path}: no features for {len(missing)} protocol utterances: "
            + ", ".join(missing[:20]) + ("..." if len(missing) > 20 else ""))
    examples = []
    for e in entries:
        for seg_index, tensor in by_utt[e.utt_id]:
            examples.append(training.Example(e.utt_id, seg_index, tensor, labels[e.utt_id]))
    return examples


def _embedding_examples(tsv_path, protocol_path, subset):
    entries = dataio.parse_protocol(protocol_path, subset)
    labels = dataio.keys_by_utt(entries)
    records = {r.utt_id: r for r in dataio.read_embeddings(tsv_path)}
    missing = [e.utt_id for e in entries if e.utt_id not in records]
    if missing:
        raise AdfdError(
            f"{tsv_path}: no embeddings for {len(missing)} protocol utterances: "
            + ", ".join(missing[:20]) + ("..." if len(missing) > 20 else ""))
    examples = [
        training.Example(e.utt_id, 0, records[e.utt_id].vector, labels[e.utt_id])
        for e in entries
    ]
    dim = examples[0].x.shape[0]
    return examples, dim


def cmd_train(args) -> int:
    opt = _Options(args)
    arch = opt.get("arch", required=True, choices={"cnn-baseline", "mlp-head"})
    out_path = opt.get("out", required=True)
    cfg = training.TrainConfig(
        epochs=opt.get("epochs", int, default=50),
        batch_size=opt.get("batch", int, default=32),
        lr=opt.get("lr", float, default=1e-3),
        seed=opt.get("seed", int, default=0),
        class_weighting=opt.get("class_weights", str, default="on",
                                choices={"on", "off"}) == "on",
    )

    if arch == "cnn-baseline":
        cache = opt.get("cache", required=True)
        dev_cache = opt.get("dev_cache", required=True)
        protocol = opt.get("protocol", required=True)
        dev_protocol = opt.get("dev_protocol", required=True)
        _require_files([cache, dev_cache, protocol, dev_protocol])
        train_data = _cache_examples(cache, protocol, "train")
        dev_data = _cache_examples(dev_cache, dev_protocol, "dev")
        arch_id = "cnn-baseline"
    else:
        emb = opt.get("embeddings", required=True)
        dev_emb = opt.get("dev_embeddings", required=True)
        protocol = opt.get("protocol", required=True)
        dev_protocol = opt.get("dev_protocol", required=True)
        _require_files([emb, dev_emb, protocol, dev_protocol])
        train_data, dim = _embedding_examples(emb, protocol, "train")
        dev_data, dev_dim = _embedding_examples(dev_emb, dev_protocol, "dev")
        if dim != dev_dim:
            raise AdfdError(f"embedding dims differ: train {dim}, dev {dev_dim}")
        arch_id = f"mlp-head:{dim}"

    _info(f"training {arch_id} on {len(train_data)} examples "
          f"({len(dev_data)} dev), seed {cfg.seed}")
    print("epoch,loss,dev_eer")

    def log_epoch(epoch, loss, eer):
        print(f"{epoch},{loss:.6g},{eer:.6g}")
        sys.stdout.flush()

    ckpt = training.train(arch_id, train_data, dev_data, cfg, on_epoch=log_epoch)
    dataio.save_checkpoint(out_path, ckpt)
    _info(f"best epoch {ckpt.epoch} with dev EER {ckpt.dev_eer:.6g}; saved {out_path}")
    return 0


# --------------------------------------------------------------------------
# score
# --------------------------------------------------------------------------

_SCORE_NET = None


def _score_init(ckpt_path: str):
    global _SCORE_NET
    _SCORE_NET = dataio.load_checkpoint(ckpt_path).build_network()


def _score_one(task) -> tuple[str, float]:
    utt_id, arrays = task
    x = np.stack(arrays).astype(np.float32)
    probs = _SCORE_NET.forward(x)
    return utt_id, float(scoring.aggregate_clip(probs)[scoring.BONAFIDE])


def cmd_score(args) -> int:
    opt = _Options(args)
    ckpt_path = opt.get("checkpoint", required=True)
    protocol = opt.get("protocol", required=True)
    subset = opt.get("subset", default="eval", choices=set(dataio.SUBSETS))
    cache_path = opt.get("cache")
    emb_path = opt.get("embeddings")
    out_path = opt.get("out", required=True)
    jobs = opt.get("jobs", int, default=1)
    if jobs < 1:
        raise _UsageError(f"--jobs must be >= 1, got {jobs}")
    if (cache_path is None) == (emb_path is None):
        raise _UsageError("provide exactly one of --cache or --embeddings")

    _require_files([p for p in (ckpt_path, protocol, cache_path, emb_path) if p])
    entries = dataio.parse_protocol(protocol, subset)

    if cache_path is not None:
        cache = dataio.read_feature_cache(cache_path)
        by_utt: dict[str, list] = {}
        for utt_id, seg_index, tensor in cache.records:
            by_utt.setdefault(utt_id, []).append(tensor)
        source = cache_path
    else:
        by_utt = {r.utt_id: [r.vector] for r in dataio.read_embeddings(emb_path)}
        source = emb_path
    missing = [e.utt_id for e in entries if e.utt_id not in by_utt]
    if missing:
        raise AdfdError(
            f"{source}: no features for {len(missing)} protocol utterances: "
            + ", ".join(missing[:20]) + ("..." if len(missing) > 20 else ""))

    tasks = [(e.utt_id, by_utt[e.utt_id]) for e in entries]
    if jobs == 1:
        _score_init(ckpt_path)
        scores = [_score_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_score_init,
                                 initargs=(str(ckpt_path),)) as pool:
            chunk = max(1, len(tasks) // (jobs * 8))
            scores = list(pool.map(_score_one, tasks, chunksize=chunk))

    scoring.write_scores(out_path, scores)
    _info(f"scored {len(scores)} utterances to {out_path}")
    return 0


# --------------------------------------------------------------------------
# eval
# --------------------------------------------------------------------------

def cmd_eval(args) -> int:
    opt = _Options(args)
    scores_path = opt.get("scores", required=True)
    protocol = opt.get("protocol", required=True)
    subset = opt.get("subset", default="eval", choices=set(dataio.SUBSETS))
    det_path = opt.get("det_csv", default=f"{opt.get('scores', required=True)}.det.csv")

    _require_files([scores_path, protocol])
    scores = scoring.read_scores(scores_path)
    keys = dataio.keys_by_utt(dataio.parse_protocol(protocol, subset))
    report = scoring.compute_metrics(scores, keys)
    scoring.write_det_csv(det_path, report.det_points)

    payload = report.to_dict()
    payload["det_csv"] = str(det_path)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


# --------------------------------------------------------------------------
# fuse
# --------------------------------------------------------------------------

def cmd_fuse(args) -> int:
    opt = _Options(args)
    out_path = opt.get("out", required=True)
    paths = args.score_files
    if not paths:
        raise _UsageError("fuse needs at least one score file")
    _require_files(paths)

    tables = [scoring.read_scores(p) for p in paths]
    id_sets = [set(u for u, _ in t) for t in tables]
    union = set.union(*id_sets)
    common = set.intersection(*id_sets)
    if union != common:
        diff = sorted(union - common)
        raise AdfdError(
            f"score files disagree on {len(diff)} utterances: "
            + ", ".join(diff[:20]) + ("..." if len(diff) > 20 else ""))

    lookup = [dict(t) for t in tables]
    fused = []
    for utt_id, _ in tables[0]:  # keep first file's order
        vectors = [(table[utt_id], 1.0 - table[utt_id]) for table in lookup]
        fused.append((utt_id, float(scoring.fuse_mean(vectors)[scoring.BONAFIDE])))
    scoring.write_scores(out_path, fused)
    _info(f"fused {len(paths)} systems over {len(fused)} utterances to {out_path}")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adfd",
        description="Spectrogram-based audio deepfake detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key=value config file; flags win")

    p = sub.add_parser("extract", help="extract feature tensors to a cache file")
    add_common(p)
    p.add_argument("--protocol", help="trial protocol listing the utterances")
    p.add_argument("--subset", choices=list(dataio.SUBSETS))
    p.add_argument("--audio-dir", help="directory with <utt_id>.wav files")
    p.add_argument("--spec", choices=sorted(RECIPES), help="feature recipe")
    p.add_argument("--dct", action="store_const", const=True,
                   help="apply an orthonormal DCT-II to the spectrogram")
    p.add_argument("--dct-axis", choices=["freq", "time"])
    p.add_argument("--out", help="output cache path")
    p.add_argument("--jobs", type=int, help="parallel workers (default 1)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a model on cached features or embeddings")
    add_common(p)
    p.add_argument("--arch", choices=["cnn-baseline", "mlp-head"])
    p.add_argument("--cache", help="training feature cache (cnn-baseline)")
    p.add_argument("--dev-cache", help="dev feature cache (cnn-baseline)")
    p.add_argument("--embeddings", help="training embedding TSV (mlp-head)")
    p.add_argument("--dev-embeddings", help="dev embedding TSV (mlp-head)")
    p.add_argument("--protocol", help="training protocol")
    p.add_argument("--dev-protocol", help="dev protocol")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--class-weights", choices=["on", "off"],
                   help="inverse-frequency class weighting (default on)")
    p.add_argument("--out", help="output checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score utterances with a trained checkpoint")
    add_common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--cache", help="feature cache to score (cnn-baseline)")
    p.add_argument("--embeddings", help="embedding TSV to score (mlp-head)")
    p.add_argument("--protocol", help="protocol giving the utterance list")
    p.add_argument("--subset", choices=list(dataio.SUBSETS))
    p.add_argument("--out", help="output score file")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="compute metrics for a score file")
    add_common(p)
    p.add_argument("--scores")
    p.add_argument("--protocol")
    p.add_argument("--subset", choices=list(dataio.SUBSETS))
    p.add_argument("--det-csv", help="DET curve CSV path (default <scores>.det.csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fuse", help="average scores from multiple systems")
    add_common(p)
    p.add_argument("score_files", nargs="*", metavar="SCORES")
    p.add_argument("--out", help="output score file")
    p.set_defaults(func=cmd_fuse)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (AdfdError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
