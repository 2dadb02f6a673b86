"""Evaluation driver: per-frame MAE in kPa, per-foot CoP errors, and the
paired significance test between the network and the nearest-neighbor
baseline."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..autodiff import load_checkpoint, no_grad
from ..errors import DataError
from ..knn import PoseIndex, PoseIndexEntry, build_index, knn_predict, load_index_refs, save_index
from ..metrics import center_of_pressure, cop_error_l2, mean_absolute_error_kpa, paired_t_test, summarize_errors
from ..pose import KEPT_JOINTS, PoseNormStats, fit_norm_stats, normalize_pose
from ..pressnet import PressNet, PressNetConfig
from ..pressure import ROWS, COLS, FEET, NormalizedPressure, PressureGrid, denormalize_pressure, fit_global_max
from .data import load_takes, norm_config_for
from .manifest import Manifest, TakeRef
from .splits import SplitSpec
from .train import TrainResult

REPORT_SCHEMA_ID = "pose2press-report-v1"


@dataclass
class PressNetPredictor:
    """A trained model bundled with its split-fitted normalization."""

    model: PressNet
    stats: PoseNormStats
    global_max: float

    @classmethod
    def from_train_result(cls, result: TrainResult) -> "PressNetPredictor":
        return cls(model=result.model, stats=result.stats, global_max=result.global_max)

    @classmethod
    def from_checkpoint(cls, path) -> "PressNetPredictor":
        path = Path(path)
        sidecar_path = path.with_suffix(".json")
        if not sidecar_path.exists():
            raise DataError(f"checkpoint sidecar {sidecar_path} not found")
        with open(sidecar_path) as fh:
            sidecar = json.load(fh)
        config = PressNetConfig.from_json(sidecar["model_config"])
        footmask = np.array(sidecar["footmask"], dtype=bool).reshape(ROWS, COLS, FEET)
        model = PressNet(config, seed=sidecar.get("model_seed", 0), footmask=footmask)
        arrays, _ = load_checkpoint(path)
        state_names = {name for name, _ in model.state_arrays()}
        model.load_state_arrays({n: a for n, a in arrays.items() if n in state_names})
        by_name = {p.name: p for p in model.parameters()}
        missing = set(by_name) - set(arrays)
        if missing:
            raise DataError(f"{path}: checkpoint lacks parameters {sorted(missing)}")
        for name, p in by_name.items():
            if arrays[name].shape != p.data.shape:
                raise DataError(f"{path}: {name} has shape {arrays[name].shape}, expected {p.data.shape}")
            p.data = arrays[name].astype(p.data.dtype)
        stats = PoseNormStats(
            mean=np.array(sidecar["pose_stats"]["mean"]),
            std=np.array(sidecar["pose_stats"]["std"]),
            split_id=sidecar["pose_stats"].get("split_id", ""),
            frame_count=sidecar["pose_stats"].get("frame_count", 0),
        )
        return cls(model=model, stats=stats, global_max=float(sidecar["global_max"]))


@dataclass
class KNNPredictor:
    index: PoseIndex
    stats: PoseNormStats


def build_knn_predictor(manifest: Manifest, split: SplitSpec, factor: int = 5) -> KNNPredictor:
    """Index every ``factor``-th training frame, normalized with train statistics."""
    pairs, _, _ = load_takes(manifest, split.train_takes)
    stats = fit_norm_stats([p.pose for p in pairs], split_id=split.split_id)
    samples = []
    for pair in pairs:
        coords = normalize_pose(pair.pose, stats).reshape(-1, 2)
        conf = pair.pose.joints[list(KEPT_JOINTS), 2]
        samples.append(PoseIndexEntry(frame_id=pair.frame_id, coords=coords, conf=conf,
                                      grid=pair.pressure, take_label=pair.ref.label))
    index = build_index(samples, factor=factor, split_id=split.split_id)
    return KNNPredictor(index=index, stats=stats)


def save_knn_predictor(path, predictor: KNNPredictor) -> None:
    save_index(path, predictor.index)
    # stats ride along so queries are normalized identically on reload
    with open(path) as fh:
        payload = json.load(fh)
    payload["pose_stats"] = {
        "mean": list(map(float, predictor.stats.mean)),
        "std": list(map(float, predictor.stats.std)),
        "split_id": predictor.stats.split_id,
        "frame_count": predictor.stats.frame_count,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_knn_predictor(path, manifest: Manifest) -> KNNPredictor:
    payload = load_index_refs(path)
    if "pose_stats" not in payload:
        raise DataError(f"{path}: index file lacks pose statistics")
    stats = PoseNormStats(
        mean=np.array(payload["pose_stats"]["mean"]),
        std=np.array(payload["pose_stats"]["std"]),
        split_id=payload["pose_stats"].get("split_id", ""),
        frame_count=payload["pose_stats"].get("frame_count", 0),
    )
    wanted = {}
    for item in payload["entries"]:
        wanted.setdefault(item["take_label"], set()).add(item["frame_id"])
    refs = []
    for ref in manifest.all_refs():
        if ref.label in wanted:
            refs.append(ref)
    missing = set(wanted) - {r.label for r in refs}
    if missing:
        raise DataError(f"{path}: takes {sorted(missing)} not in manifest")
    samples = []
    for ref in refs:
        pairs, _, _ = load_takes(manifest, [ref])
        keep = wanted[ref.label]
        for pair in pairs:
            if pair.frame_id in keep:
                coords = normalize_pose(pair.pose, stats).reshape(-1, 2)
                conf = pair.pose.joints[list(KEPT_JOINTS), 2]
                samples.append(PoseIndexEntry(frame_id=pair.frame_id, coords=coords, conf=conf,
                                              grid=pair.pressure, take_label=ref.label))
    index = PoseIndex(entries=samples, subsample_factor=payload["subsample_factor"],
                      split_id=payload.get("split_id", ""))
    return KNNPredictor(index=index, stats=stats)


@dataclass
class PredictorFrameErrors:
    mae_kpa: list
    cop_mm: dict  # {"left": [...], "right": [...]}
    cop_excluded: dict  # {"left": int, "right": int}
    frame_ids: list


def _evaluate_pressnet(predictor: PressNetPredictor, pairs, manifest: Manifest,
                       batch_size: int = 64) -> PredictorFrameErrors:
    model = predictor.model
    x = np.stack([normalize_pose(p.pose, predictor.stats) for p in pairs]).astype(model.dtype)
    outputs = []
    with no_grad():
        for start in range(0, len(x), batch_size):
            outputs.append(model.forward(x[start : start + batch_size], "eval").data)
    normalized = np.concatenate(outputs)
    return _score_frames(
        pairs,
        lambda i, pair: denormalize_pressure(
            NormalizedPressure(pair.frame_id, normalized[i], model.footmask),
            norm_config_for(manifest, pair.ref.subject, predictor.global_max),
        ),
    )


def _evaluate_knn(predictor: KNNPredictor, pairs) -> PredictorFrameErrors:
    def predict(i, pair):
        coords = normalize_pose(pair.pose, predictor.stats).reshape(-1, 2)
        conf = pair.pose.joints[list(KEPT_JOINTS), 2]
        return knn_predict(predictor.index, coords, conf).grid

    return _score_frames(pairs, predict)


def _score_frames(pairs, predict) -> PredictorFrameErrors:
    mae = []
    cop_mm = {"left": [], "right": []}
    excluded = {"left": 0, "right": 0}
    frame_ids = []
    for i, pair in enumerate(pairs):
        predicted = predict(i, pair)
        if not np.array_equal(predicted.mask, pair.pressure.mask):
            raise DataError(
                f"frame {pair.frame_id}: prediction mask differs from ground truth mask"
            )
        mae.append(mean_absolute_error_kpa(pair.pressure, predicted))
        frame_ids.append(pair.frame_id)
        for foot, name in ((0, "left"), (1, "right")):
            gt_cop = center_of_pressure(pair.pressure, foot)
            pred_cop = center_of_pressure(predicted, foot)
            if gt_cop.defined and pred_cop.defined:
                cop_mm[name].append(cop_error_l2(gt_cop, pred_cop))
            else:
                excluded[name] += 1
    return PredictorFrameErrors(mae_kpa=mae, cop_mm=cop_mm, cop_excluded=excluded,
                                frame_ids=frame_ids)


def evaluate(manifest: Manifest, split: SplitSpec,
             pressnet: Optional[PressNetPredictor] = None,
             knn: Optional[KNNPredictor] = None) -> dict:
    """Score predictors on the held-out subject; returns the report dict.

    With both predictors present the report carries a two-tailed paired
    t-test over per-frame MAE (network minus baseline).
    """
    if pressnet is None and knn is None:
        raise DataError("evaluate needs a trained model, a KNN index, or both")
    if pressnet is not None and pressnet.stats.split_id and split.split_id:
        if pressnet.stats.split_id != split.split_id:
            raise DataError(
                f"checkpoint was fitted on {pressnet.stats.split_id!r} but evaluating "
                f"{split.split_id!r}; normalization would leak"
            )
    pairs, _, skipped = load_takes(manifest, split.test_takes)

    results = {}
    if pressnet is not None:
        results["pressnet"] = _evaluate_pressnet(pressnet, pairs, manifest)
    if knn is not None:
        results["knn"] = _evaluate_knn(knn, pairs)

    report = {
        "schema": REPORT_SCHEMA_ID,
        "split_subject": split.test_subject,
        "frames_evaluated": len(pairs),
        "frames_skipped": skipped,
        "predictors": {},
    }
    for name, res in results.items():
        report["predictors"][name] = {
            "mae_kpa": summarize_errors(res.mae_kpa).to_json(),
            "cop_error_mm": {
                foot: {
                    **(summarize_errors(series).to_json() if series else {"count": 0}),
                    "excluded_frames": res.cop_excluded[foot],
                }
                for foot, series in res.cop_mm.items()
            },
        }
    if "pressnet" in results and "knn" in results:
        test = paired_t_test(results["pressnet"].mae_kpa, results["knn"].mae_kpa)
        report["paired_t_test"] = {"a": "pressnet", "b": "knn", **test.to_json()}
    report["_frame_errors"] = {
        name: {"frame_ids": res.frame_ids, "mae_kpa": res.mae_kpa}
        for name, res in results.items()
    }
    return report


def write_report(report: dict, path) -> Path:
    """Write the JSON report and a per-frame MAE CSV alongside it."""
    path = Path(path)
    frame_errors = report.pop("_frame_errors", None)
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    if frame_errors:
        csv_path = path.with_suffix(".frames.csv")
        names = list(frame_errors)
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame_id"] + [f"mae_kpa_{n}" for n in names])
            ids = frame_errors[names[0]]["frame_ids"]
            for i, frame_id in enumerate(ids):
                writer.writerow([frame_id] + [repr(frame_errors[n]["mae_kpa"][i]) for n in names])
    return path
