from .data import FramePair, TakeData, build_arrays, load_take, load_takes
from .evaluate import (
    KNNPredictor,
    PressNetPredictor,
    build_knn_predictor,
    evaluate,
    load_knn_predictor,
    save_knn_predictor,
    write_report,
)
from .manifest import Manifest, Session, Subject, Take, TakeRef, load_manifest, save_manifest
from .render import colormap, render_heatmap
from .splits import SplitSpec, make_loso_splits, split_for_subject
from .synth import SyntheticSpec, synth_generate
from .train import TrainConfig, TrainResult, eval_mse, train

__all__ = [
    "FramePair",
    "KNNPredictor",
    "Manifest",
    "PressNetPredictor",
    "Session",
    "SplitSpec",
    "Subject",
    "SyntheticSpec",
    "Take",
    "TakeData",
    "TakeRef",
    "TrainConfig",
    "TrainResult",
    "build_arrays",
    "build_knn_predictor",
    "colormap",
    "eval_mse",
    "evaluate",
    "load_knn_predictor",
    "load_manifest",
    "load_take",
    "load_takes",
    "make_loso_splits",
    "render_heatmap",
    "save_knn_predictor",
    "save_manifest",
    "split_for_subject",
    "synth_generate",
    "train",
    "write_report",
]
