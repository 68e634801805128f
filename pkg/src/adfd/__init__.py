"""Spectrogram-based audio deepfake detection toolkit."""

from .audio import SAMPLE_RATE, SEGMENT_LEN, AudioClip, Segment, load_audio, segment_clip
from .features import (
    DctAxis,
    FeatureTensor,
    FilterBank,
    FilterKind,
    RECIPES,
    SpectralConfig,
    Transform,
    build_filterbank,
    config_for_recipe,
    extract_features,
)
from .nnet import AdamState, Network, adam_step, init_model
from .scoring import (
    EvalReport,
    aggregate_clip,
    compute_eer,
    compute_metrics,
    decide,
    fuse_mean,
)
from .training import (
    EmbeddingRecord,
    Example,
    ModelCheckpoint,
    TrainConfig,
    predict_segments,
    train,
)
from .dataio import (
    TrialEntry,
    load_checkpoint,
    parse_protocol,
    read_embeddings,
    read_feature_cache,
    save_checkpoint,
    write_feature_cache,
)

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "Segment", "load_audio", "segment_clip",
    "SAMPLE_RATE", "SEGMENT_LEN",
    "SpectralConfig", "Transform", "FilterKind", "DctAxis", "FilterBank",
    "FeatureTensor", "RECIPES", "config_for_recipe", "build_filterbank",
    "extract_features",
    "Network", "AdamState", "init_model", "adam_step",
    "EvalReport", "aggregate_clip", "fuse_mean", "decide",
    "compute_eer", "compute_metrics",
    "TrainConfig", "Example", "EmbeddingRecord", "ModelCheckpoint",
    "train", "predict_segments",
    "TrialEntry", "parse_protocol", "read_embeddings",
    "read_feature_cache", "write_feature_cache",
    "save_checkpoint", "load_checkpoint",
    "__version__",
]
