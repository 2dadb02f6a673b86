import json
from pathlib import Path

import numpy as np
import pytest

from pose2press.errors import DataError, NumericalError
from pose2press.harness import (
    KNNPredictor,
    SplitSpec,
    SyntheticSpec,
    TrainConfig,
    build_knn_predictor,
    evaluate,
    load_manifest,
    load_takes,
    make_loso_splits,
    render_heatmap,
    split_for_subject,
    synth_generate,
    train,
    write_report,
)
from pose2press.harness.evaluate import PressNetPredictor, load_knn_predictor, save_knn_predictor
from pose2press.harness.manifest import Manifest, Session, Subject, Take
from pose2press.harness.train import LR_DROP_AFTER_EPOCH
from pose2press.knn import PoseIndexEntry, build_index, knn_predict
from pose2press.metrics import mean_absolute_error_kpa
from pose2press.pose import KEPT_JOINTS, fit_norm_stats, normalize_pose
from pose2press.pressnet import PressNet, PressNetConfig
from pose2press.pressure import CLIP_KPA, PressureGrid, load_mask_file

TINY_NET = PressNetConfig(
    input_dim=48,
    stem_fc_out=96,
    stem_reshape=(4, 3, 8),
    block_scales=((2, 2), (2, 2), (2, 2), (2, 1)),
    block_out_channels=(8, 8, 8, 8),
    head_fc_sizes=(4, 2520),
    head_crop=(60, 21),
    block_fc_bottleneck=4,
    dropout_rate=0.1,
)


def fake_manifest(n_subjects=3, takes_per_subject=2):
    subjects = {}
    for s in range(n_subjects):
        sid = f"s{s + 1:02d}"
        takes = [Take(take_id=t + 1, pose_file=f"{sid}_{t}.csv", pressure_file="p.csv",
                      mask_file="m.csv") for t in range(takes_per_subject)]
        subjects[sid] = Subject(subject_id=sid, weight_kg=50.0 + s, height_m=1.6,
                                sessions=[Session(session_id=1, takes=takes)])
    return Manifest(root=Path("/nonexistent"), subjects=subjects)


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    spec = SyntheticSpec(n_subjects=2, takes=2, frames_per_take=48, seed=11)
    manifest = synth_generate(spec, out)
    return manifest


class TestSplits:
    def test_six_subjects_six_splits(self):
        splits = make_loso_splits(fake_manifest(n_subjects=6))
        assert len(splits) == 6
        assert sorted(s.test_subject for s in splits) == [f"s{i:02d}" for i in range(1, 7)]

    def test_smallest_case_two_subjects(self):
        splits = make_loso_splits(fake_manifest(n_subjects=2, takes_per_subject=2))
        first = splits[0]
        assert first.test_subject == "s01"
        assert [r.take for r in first.train_takes] == [1]
        assert [r.take for r in first.val_takes] == [2]
        assert all(r.subject == "s02" for r in first.train_takes + first.val_takes)
        assert all(r.subject == "s01" for r in first.test_takes)

    def test_validation_is_last_take_of_each_training_subject(self):
        splits = make_loso_splits(fake_manifest(n_subjects=3, takes_per_subject=3))
        split = splits[0]
        assert {r.subject for r in split.val_takes} == {"s02", "s03"}
        assert all(r.take == 3 for r in split.val_takes)

    def test_disjoint_train_and_test(self):
        for split in make_loso_splits(fake_manifest(n_subjects=4)):
            train_set = {(r.subject, r.session, r.take) for r in split.train_takes + split.val_takes}
            test_set = {(r.subject, r.session, r.take) for r in split.test_takes}
            assert not train_set & test_set
            assert all(r.subject != split.test_subject for r in split.train_takes)

    def test_single_take_subject_rejected(self):
        with pytest.raises(DataError, match="single take"):
            make_loso_splits(fake_manifest(n_subjects=2, takes_per_subject=1))

    def test_one_subject_rejected(self):
        with pytest.raises(DataError, match="at least 2"):
            make_loso_splits(fake_manifest(n_subjects=1))


class TestSynth:
    def test_same_seed_byte_identical(self, tmp_path):
        spec = SyntheticSpec(n_subjects=2, takes=1, frames_per_take=20, seed=5)
        synth_generate(spec, tmp_path / "a")
        synth_generate(spec, tmp_path / "b")
        files_a = sorted((tmp_path / "a").iterdir())
        files_b = sorted((tmp_path / "b").iterdir())
        assert [f.name for f in files_a] == [f.name for f in files_b]
        for fa, fb in zip(files_a, files_b):
            assert fa.read_bytes() == fb.read_bytes(), fa.name

    def test_different_seed_differs(self, tmp_path):
        synth_generate(SyntheticSpec(n_subjects=1, takes=1, frames_per_take=10, seed=5), tmp_path / "a")
        synth_generate(SyntheticSpec(n_subjects=1, takes=1, frames_per_take=10, seed=6), tmp_path / "b")
        pose_a = (tmp_path / "a" / "s01_s1_t1_pose.csv").read_bytes()
        pose_b = (tmp_path / "b" / "s01_s1_t1_pose.csv").read_bytes()
        assert pose_a != pose_b

    def test_pressure_respects_mask_and_clip(self, small_dataset):
        pairs, mask, _ = load_takes(small_dataset, [next(small_dataset.all_refs())])
        for pair in pairs:
            assert np.all(pair.pressure.values[~mask] == 0.0)
            assert pair.pressure.values.max() <= CLIP_KPA
            assert np.all(pair.pressure.values >= 0.0)

    def test_face_joints_frequently_undetected(self, small_dataset):
        ref = next(small_dataset.all_refs())
        pairs, _, _ = load_takes(small_dataset, [ref])
        face_conf = np.stack([p.pose.joints[15:19, 2] for p in pairs])
        zero_fraction = (face_conf == 0).mean()
        assert zero_fraction > 0.3  # dropout probability 0.6 per joint

    def test_manifest_round_trip(self, small_dataset, tmp_path):
        assert small_dataset.subject_ids() == ["s01", "s02"]
        loaded = load_manifest(small_dataset.root / "manifest.json")
        assert loaded.subject_ids() == ["s01", "s02"]
        assert loaded.subject("s01").weight_kg == 45.0

    def test_shuffled_pairing_degrades_knn(self, small_dataset):
        # pose->pressure mutual information: a 1-NN regressor on true pairs
        # must beat the same regressor on permuted pairs by 2x or more
        ref = next(small_dataset.all_refs())
        pairs, _, _ = load_takes(small_dataset, [ref])
        stats = fit_norm_stats([p.pose for p in pairs])

        def entries(pairing):
            out = []
            for pair, grid in pairing:
                out.append(PoseIndexEntry(
                    frame_id=pair.frame_id,
                    coords=normalize_pose(pair.pose, stats).reshape(-1, 2),
                    conf=pair.pose.joints[list(KEPT_JOINTS), 2],
                    grid=grid,
                ))
            return out

        even = pairs[0::2]
        odd = pairs[1::2]
        true_index = build_index(entries([(p, p.pressure) for p in even]), factor=1)
        rng = np.random.default_rng(0)
        shuffled_grids = [even[i].pressure for i in rng.permutation(len(even))]
        shuffled_index = build_index(entries(list(zip(even, shuffled_grids))), factor=1)

        def mae_of(index):
            errs = []
            for pair in odd:
                coords = normalize_pose(pair.pose, stats).reshape(-1, 2)
                conf = pair.pose.joints[list(KEPT_JOINTS), 2]
                pred = knn_predict(index, coords, conf).grid
                errs.append(mean_absolute_error_kpa(pair.pressure, pred))
            return float(np.mean(errs))

        true_mae = mae_of(true_index)
        shuffled_mae = mae_of(shuffled_index)
        assert shuffled_mae >= 2.0 * true_mae


class TestTrainConfig:
    def test_lr_schedule_single_drop_at_epoch_13(self):
        cfg = TrainConfig()
        trace = [cfg.lr_for_epoch(e) for e in range(1, 21)]
        assert trace[:LR_DROP_AFTER_EPOCH] == [1e-3] * 12
        assert trace[LR_DROP_AFTER_EPOCH:] == [1e-5] * 8
        drops = np.nonzero(np.diff(trace))[0]
        assert list(drops) == [11]  # between epoch 12 and 13

    def test_json_round_trip(self, tmp_path):
        cfg = TrainConfig(epochs=5, batch_size=8, seed=9)
        path = tmp_path / "train.json"
        path.write_text(json.dumps(cfg.to_json()))
        assert TrainConfig.from_json_file(path) == cfg

    def test_unknown_option_rejected(self, tmp_path):
        path = tmp_path / "train.json"
        path.write_text('{"epochs": 2, "momentum": 0.9}')
        from pose2press.errors import ConfigError

        with pytest.raises(ConfigError, match="momentum"):
            TrainConfig.from_json_file(path)


class TestTraining:
    def _train(self, manifest, epochs=2, seed=3, batch_size=16, out_dir=None):
        split = split_for_subject(manifest, "s01")
        mask = load_mask_file(manifest.resolve("footmask.csv"))
        model = PressNet(TINY_NET, seed=seed, footmask=mask)
        cfg = TrainConfig(epochs=epochs, batch_size=batch_size, seed=seed, dropout_rate=0.1)
        return train(model, manifest, split, cfg, out_dir=out_dir), split, cfg

    def test_loss_trace_finite_and_recorded(self, small_dataset):
        result, _, cfg = self._train(small_dataset)
        steps_per_epoch = 48 // cfg.batch_size
        assert len(result.step_losses) == cfg.epochs * steps_per_epoch
        assert all(np.isfinite(v) for v in result.step_losses)
        assert len(result.epoch_val_losses) == cfg.epochs
        assert result.best_epoch is not None

    def test_deterministic_loss_trace_same_seed(self, small_dataset):
        first, _, _ = self._train(small_dataset, epochs=1, seed=5)
        second, _, _ = self._train(small_dataset, epochs=1, seed=5)
        assert first.step_losses[:10] == second.step_losses[:10]

    def test_lr_trace_in_result(self, small_dataset):
        result, _, cfg = self._train(small_dataset, epochs=2)
        assert result.lr_trace == [cfg.lr_for_epoch(1), cfg.lr_for_epoch(2)]

    def test_checkpoint_round_trips_through_evaluation(self, small_dataset, tmp_path):
        result, split, _ = self._train(small_dataset, out_dir=tmp_path / "ckpt")
        assert result.checkpoint_path.exists()
        reloaded = PressNetPredictor.from_checkpoint(result.checkpoint_path)
        direct = evaluate(small_dataset, split,
                          pressnet=PressNetPredictor.from_train_result(result))
        again = evaluate(small_dataset, split, pressnet=reloaded)
        a = direct["predictors"]["pressnet"]["mae_kpa"]["mean"]
        b = again["predictors"]["pressnet"]["mae_kpa"]["mean"]
        # stored as float32; running stats included
        assert a == pytest.approx(b, rel=1e-4)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow is the point
    def test_nan_abort_carries_diagnostics(self, small_dataset):
        split = split_for_subject(small_dataset, "s01")
        mask = load_mask_file(small_dataset.resolve("footmask.csv"))
        model = PressNet(TINY_NET, seed=1, footmask=mask)
        cfg = TrainConfig(epochs=1, batch_size=16, seed=1, lr_initial=1e18)
        with pytest.raises(NumericalError, match="epoch 1 batch"):
            train(model, small_dataset, split, cfg)

    def test_batch_size_larger_than_dataset_rejected(self, small_dataset):
        with pytest.raises(DataError, match="batch"):
            self._train(small_dataset, batch_size=1000)


class TestEvaluate:
    def test_ground_truth_against_itself_is_perfect(self, small_dataset):
        # index the test take itself at factor 1: every query finds its own
        # frame, so MAE and CoP errors vanish
        split = split_for_subject(small_dataset, "s01")
        self_split = SplitSpec(test_subject="s01", train_takes=split.test_takes,
                               val_takes=[], test_takes=split.test_takes)
        predictor = build_knn_predictor(small_dataset, self_split, factor=1)
        report = evaluate(small_dataset, self_split, knn=predictor)
        knn_block = report["predictors"]["knn"]
        assert knn_block["mae_kpa"]["mean"] == 0.0
        assert knn_block["mae_kpa"]["max"] == 0.0
        assert knn_block["cop_error_mm"]["left"]["mean"] == 0.0
        assert knn_block["cop_error_mm"]["right"]["max"] == 0.0

    def test_report_validates_against_schema(self, small_dataset, tmp_path):
        import jsonschema
        from importlib import resources

        split = split_for_subject(small_dataset, "s01")
        knn = build_knn_predictor(small_dataset, split, factor=5)
        report = evaluate(small_dataset, split, knn=knn)
        path = write_report(report, tmp_path / "report.json")
        with open(path) as fh:
            payload = json.load(fh)
        schema = json.loads(
            resources.files("pose2press.data").joinpath("report.schema.json").read_text()
        )
        jsonschema.validate(payload, schema)

    def test_frames_csv_written(self, small_dataset, tmp_path):
        split = split_for_subject(small_dataset, "s01")
        knn = build_knn_predictor(small_dataset, split, factor=5)
        report = evaluate(small_dataset, split, knn=knn)
        write_report(report, tmp_path / "report.json")
        frames = (tmp_path / "report.frames.csv").read_text().splitlines()
        assert frames[0] == "frame_id,mae_kpa_knn"
        assert len(frames) == 1 + report["frames_evaluated"]

    def test_split_mismatch_rejected(self, small_dataset, tmp_path):
        result_split = split_for_subject(small_dataset, "s01")
        mask = load_mask_file(small_dataset.resolve("footmask.csv"))
        model = PressNet(TINY_NET, seed=2, footmask=mask)
        cfg = TrainConfig(epochs=1, batch_size=16, seed=2)
        result = train(model, small_dataset, result_split, cfg)
        other = split_for_subject(small_dataset, "s02")
        with pytest.raises(DataError, match="leak"):
            evaluate(small_dataset, other,
                     pressnet=PressNetPredictor.from_train_result(result))

    def test_knn_predictor_save_load_round_trip(self, small_dataset, tmp_path):
        split = split_for_subject(small_dataset, "s01")
        predictor = build_knn_predictor(small_dataset, split, factor=5)
        path = tmp_path / "index.json"
        save_knn_predictor(path, predictor)
        reloaded = load_knn_predictor(path, small_dataset)
        assert len(reloaded.index) == len(predictor.index)
        report_a = evaluate(small_dataset, split, knn=predictor)
        report_b = evaluate(small_dataset, split, knn=reloaded)
        assert report_a["predictors"]["knn"]["mae_kpa"]["mean"] == pytest.approx(
            report_b["predictors"]["knn"]["mae_kpa"]["mean"]
        )


class TestRender:
    def _grid(self, seed=0):
        from pose2press.pressure import canonical_footmask

        mask = canonical_footmask()
        rng = np.random.default_rng(seed)
        values = rng.uniform(0, 200, size=mask.shape) * mask
        return PressureGrid(0, values, mask)

    def test_rendering_deterministic(self, tmp_path):
        g = self._grid()
        p1 = render_heatmap(tmp_path / "a.ppm", g, self._grid(1))
        p2 = render_heatmap(tmp_path / "b.ppm", g, self._grid(1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_zero_grid_uniform_lowest_color(self, tmp_path):
        from pose2press.pressure import canonical_footmask

        mask = canonical_footmask()
        g = PressureGrid(0, np.zeros(mask.shape), mask)
        path = render_heatmap(tmp_path / "zero.ppm", g)
        blob = path.read_bytes()
        header_end = blob.index(b"255\n") + 4
        pixels = np.frombuffer(blob[header_end:], dtype=np.uint8).reshape(-1, 3)
        colors = {tuple(c) for c in np.unique(pixels, axis=0)}
        # only the zero color, the background, and the separator remain
        assert colors <= {(0, 0, 255), (235, 235, 235), (255, 255, 255)}
        assert (0, 0, 255) in colors

    def test_max_cell_maps_to_top_color(self, tmp_path):
        g = self._grid(2)
        path = render_heatmap(tmp_path / "max.ppm", g)
        blob = path.read_bytes()
        header_end = blob.index(b"255\n") + 4
        pixels = np.frombuffer(blob[header_end:], dtype=np.uint8).reshape(-1, 3)
        assert (pixels == np.array([255, 0, 0])).all(axis=1).any()

    def test_metadata_comments_present(self, tmp_path):
        path = render_heatmap(tmp_path / "m.ppm", self._grid(), self._grid(3))
        header = path.read_bytes()[:600].decode("ascii", "replace")
        assert "# shared_max_kpa" in header
        assert "# panel ground_truth max_kpa" in header
        assert "# panel abs_difference max_kpa" in header
