"""Shared fixtures: synthetic corpora, WAV writers, and the trained
end-to-end models used by the acceptance tests.

The WAV writers deliberately go through the stdlib `wave` module and
scipy rather than the package's own I/O, so file-format tests compare
two independent implementations.
"""
from __future__ import annotations

import time
import wave

import numpy as np
import pytest

from _synth import make_corpus
from adfd import features, training
from adfd.audio import Segment


def write_wav_pcm16(path, samples, rate=16000):
    """Write mono PCM-16 via the stdlib wave module."""
    x = np.asarray(samples, dtype=np.float64)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(pcm.tobytes())


def write_wav_float32(path, samples, rate=16000):
    """Write mono IEEE-float WAV via scipy (fmt tag 3)."""
    from scipy.io import wavfile

    wavfile.write(str(path), rate, np.asarray(samples, dtype=np.float32))


@pytest.fixture(scope="session")
def synth_corpus():
    """800 synthetic clips (400 bonafide / 400 spoof), interleaved."""
    clips, labels, ids = make_corpus(seed=2024, n_per_class=400)
    return {"clips": clips, "labels": labels, "ids": ids}


def _examples(corpus, recipe):
    cfg = features.config_for_recipe(recipe)
    return [
        training.Example(u, 0, features.extract_features(Segment(u, 0, c), cfg).data, int(l))
        for c, l, u in zip(corpus["clips"], corpus["labels"], corpus["ids"])
    ]


def _train_and_score(corpus, recipe, seed):
    """Extract, train 10 epochs, and score the held-out 200-clip split.

    Returns timings, per-utterance eval scores, and the eval EER.
    """
    from adfd import scoring

    t0 = time.perf_counter()
    ex = _examples(corpus, recipe)
    t_extract = time.perf_counter() - t0

    train_set, dev_set, eval_set = ex[:500], ex[500:600], ex[600:]
    cfg = training.TrainConfig(epochs=10, batch_size=32, lr=1e-3, seed=seed)
    t0 = time.perf_counter()
    ckpt = training.train("cnn-baseline", train_set, dev_set, cfg)
    t_train = time.perf_counter() - t0

    net = ckpt.build_network()
    scores = dict(training.clip_scores(net, eval_set))
    keys = {e.utt_id: e.label for e in eval_set}
    bona = [s for u, s in scores.items() if keys[u] == 0]
    spoof = [s for u, s in scores.items() if keys[u] == 1]
    eer, _ = scoring.compute_eer(bona, spoof)
    return {
        "recipe": recipe,
        "seed": seed,
        "checkpoint": ckpt,
        "scores": scores,
        "keys": keys,
        "eer": eer,
        "t_extract": t_extract,
        "t_train": t_train,
        "train_set": train_set,
        "eval_set": eval_set,
    }


@pytest.fixture(scope="session")
def e2e_stft(synth_corpus):
    """The 10-epoch STFT&LF run on the synthetic corpus (seed 42)."""
    t0 = time.perf_counter()
    result = _train_and_score(synth_corpus, "stft-lf", seed=42)
    result["t_total"] = time.perf_counter() - t0
    return result


@pytest.fixture(scope="session")
def e2e_cqt(synth_corpus):
    """The companion CQT run (seed 43) used by the fusion check."""
    return _train_and_score(synth_corpus, "cqt", seed=43)


@pytest.fixture(scope="session")
def cli_corpus(tmp_path_factory):
    """A small on-disk corpus for CLI runs: WAVs plus protocol files.

    12 two-second clips (6 per class) for train, 6 for dev, 6 for eval,
    plus one 3-second eval clip that produces two segments.
    """
    root = tmp_path_factory.mktemp("cli_corpus")
    audio = root / "audio"
    audio.mkdir()
    clips, labels, ids = make_corpus(seed=777, n_per_class=13)

    def protocol_line(utt, label):
        sysid = "-" if label == 0 else "A01"
        key = "bonafide" if label == 0 else "spoof"
        return f"SP_{utt[-4:]} {utt} - {sysid} {key}\n"

    splits = {"train": range(0, 12), "dev": range(12, 18), "eval": range(18, 24)}
    for name, idx in splits.items():
        with open(root / f"{name}.txt", "w") as fh:
            for i in idx:
                write_wav_pcm16(audio / f"{ids[i]}.wav", clips[i])
                fh.write(protocol_line(ids[i], labels[i]))

    # one long clip: 3 s of the next bonafide clip plus half of itself
    long_x = np.concatenate([clips[24], clips[24][:16000]])
    write_wav_pcm16(audio / "SYN_LONG_0000.wav", long_x)
    with open(root / "eval.txt", "a") as fh:
        fh.write("SP_9999 SYN_LONG_0000 - - bonafide\n")

    return {
        "root": root,
        "audio": audio,
        "protocols": {k: root / f"{k}.txt" for k in splits},
        "labels": {ids[i]: int(labels[i]) for i in range(24)} | {"SYN_LONG_0000": 0},
    }
