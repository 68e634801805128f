"""Mini-batch training with per-epoch dev-set model selection.

Shuffling is a pure function of (seed, epoch), dropout noise a pure
function of (seed, epoch) as well, so a run is exactly reproducible from
its config. After every epoch the dev set is scored at clip level and
the checkpoint with the lowest dev EER wins, earlier epoch on ties.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import scoring
from .errors import EmptyDatasetError, LabelOutOfRangeError, ShapeMismatchError
from .nnet import AdamState, Network, adam_step, init_model

N_CLASSES = 2


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    class_weighting: bool = True  # inverse-frequency class weights
    shuffle: bool = True


@dataclass(frozen=True)
class Example:
    """One training/scoring item: a feature tensor or embedding vector
    with its clip label (0 bonafide, 1 spoof)."""

    utt_id: str
    seg_index: int
    x: np.ndarray
    label: int


@dataclass
class ModelCheckpoint:
    """Trained parameters plus the metadata needed to rebuild the net."""

    arch_id: str
    seed: int
    params: list[tuple[str, np.ndarray]]
    dev_eer: float
    epoch: int = 0  # 1-based epoch the parameters come from; 0 = untrained

    def build_network(self) -> Network:
        net = init_model(self.arch_id, self.seed)
        net.set_params(self.params)
        return net


@dataclass(frozen=True)
class EmbeddingRecord:
    """A precomputed utterance-level embedding from an external model."""

    utt_id: str
    vector: np.ndarray  # float32
    source_tag: str = ""


def examples_from_tensors(tensors, labels: dict[str, int] | None = None) -> list[Example]:
    """Adapt FeatureTensor objects; labels map utt_id to 0/1 (default -1
    for score-only use)."""
    out = []
    for t in tensors:
        label = labels[t.utt_id] if labels is not None else -1
        out.append(Example(t.utt_id, t.seg_index, t.data, label))
    return out


def examples_from_embeddings(records, labels: dict[str, int] | None = None) -> list[Example]:
    """Adapt EmbeddingRecord objects; one example per utterance."""
    out = []
    for r in records:
        label = labels[r.utt_id] if labels is not None else -1
        out.append(Example(r.utt_id, 0, r.vector, label))
    return out


def inverse_frequency_weights(labels: np.ndarray) -> np.ndarray:
    """w_c = n_total / (n_classes * n_c); balanced data gives all ones."""
    counts = np.bincount(labels, minlength=N_CLASSES).astype(np.float64)
    if (counts == 0).any():
        raise EmptyDatasetError(f"every class needs examples, got counts {counts.tolist()}")
    return labels.size / (N_CLASSES * counts)


def _validate(data: list[Example], name: str) -> tuple[np.ndarray, np.ndarray]:
    if not data:
        raise EmptyDatasetError(f"{name} set is empty")
    labels = np.array([e.label for e in data], dtype=np.int64)
    bad = ~np.isin(labels, (0, 1))
    if bad.any():
        culprit = data[int(np.argmax(bad))]
        raise LabelOutOfRangeError(
            f"{name}: utterance {culprit.utt_id!r} has label {culprit.label}, expected 0 or 1")
    x = np.stack([e.x for e in data]).astype(np.float32)
    return x, labels


def clip_scores(net: Network, data: list[Example]) -> list[tuple[str, float]]:
    """Bonafide score per clip: segment probabilities averaged per
    utterance, in first-appearance order.

    Each utterance is forwarded as its own batch, so scores do not depend
    on how utterances are grouped or parallelized.
    """
    by_utt: dict[str, list[Example]] = {}
    for e in data:
        by_utt.setdefault(e.utt_id, []).append(e)
    out = []
    for utt_id, examples in by_utt.items():
        x = np.stack([e.x for e in examples]).astype(np.float32)
        probs = net.forward(x)
        agg = scoring.aggregate_clip(probs)
        out.append((utt_id, float(agg[scoring.BONAFIDE])))
    return out


def dev_clip_eer(net: Network, dev_data: list[Example]) -> float:
    """Clip-level EER on a labeled dev set (single scoring code path)."""
    label_of = {e.utt_id: e.label for e in dev_data}
    scored = clip_scores(net, dev_data)
    bona = [s for u, s in scored if label_of[u] == 0]
    spoof = [s for u, s in scored if label_of[u] == 1]
    eer, _ = scoring.compute_eer(bona, spoof)
    return eer


def predict_segments(net: Network, items) -> list[tuple[str, int, np.ndarray]]:
    """Probabilities for (utt_id, seg_index, array) items, batched per
    utterance, output order = input order."""
    items = list(items)
    if not items:
        return []
    by_utt: dict[str, list[int]] = {}
    for i, (utt_id, _, _) in enumerate(items):
        by_utt.setdefault(utt_id, []).append(i)
    results: list = [None] * len(items)
    for utt_id, idxs in by_utt.items():
        x = np.stack([np.asarray(items[i][2]) for i in idxs]).astype(np.float32)
        probs = net.forward(x)
        for row, i in enumerate(idxs):
            results[i] = (items[i][0], items[i][1], probs[row])
    return results


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Shuffle order as a pure function of (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def train(arch_id: str, train_data: list[Example], dev_data: list[Example],
          cfg: TrainConfig, on_epoch=None) -> ModelCheckpoint:
    """Train with shuffled mini-batch Adam and dev-EER model selection.

    on_epoch, when given, is called as on_epoch(epoch, mean_loss, dev_eer)
    after each epoch (1-based). With cfg.epochs == 0 the initial
    parameters are returned unchanged.
    """
    x_train, y_train = _validate(train_data, "train")
    _validate(dev_data, "dev")

    net = init_model(arch_id, cfg.seed)
    if x_train.shape[1:] != net.input_shape:
        raise ShapeMismatchError(
            f"{arch_id} expects inputs of shape {net.input_shape}, got {x_train.shape[1:]}")
    weights = inverse_frequency_weights(y_train) if cfg.class_weighting else None

    if cfg.epochs == 0:
        return ModelCheckpoint(arch_id, cfg.seed, _snapshot(net),
                               dev_eer=dev_clip_eer(net, dev_data), epoch=0)

    params = net.param_arrays()
    state = AdamState.for_params(params, lr=cfg.lr)
    best_params = None
    best_eer = np.inf
    best_epoch = 0
    n = len(train_data)

    for epoch in range(1, cfg.epochs + 1):
        order = _epoch_order(cfg.seed, epoch, n) if cfg.shuffle else np.arange(n)
        dropout_rng = np.random.default_rng([cfg.seed, epoch, 0xD0])
        losses = []
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = net.loss_and_grads(
                x_train[batch], y_train[batch], rng=dropout_rng, class_weights=weights)
            adam_step(params, grads, state)
            losses.append(loss)
        eer = dev_clip_eer(net, dev_data)
        if on_epoch is not None:
            on_epoch(epoch, float(np.mean(losses)), eer)
        if eer < best_eer:  # strict: ties keep the earlier epoch
            best_eer = eer
            best_epoch = epoch
            best_params = _snapshot(net)

    return ModelCheckpoint(arch_id, cfg.seed, best_params, dev_eer=float(best_eer),
                           epoch=best_epoch)


def _snapshot(net: Network) -> list[tuple[str, np.ndarray]]:
    return [(name, arr.copy()) for name, arr in net.params()]
