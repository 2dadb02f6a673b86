import numpy as np
import pytest

from pose2press.autodiff import Tensor, grad_check, mse_loss
from pose2press.errors import ConfigError, ShapeError
from pose2press.pressnet import PressNetConfig, PressNet, ResidualBlock, build_pressnet
from pose2press.pressure import canonical_footmask

# frozen once computed from the default architecture; a change here means
# the architecture changed
DEFAULT_PARAMETER_COUNT = 5_276_284


def mini_config(**overrides):
    """Hand-countable net: stem 4->12, one unit-scale block, 2x2 crop."""
    defaults = dict(
        input_dim=4,
        stem_fc_out=12,
        stem_reshape=(2, 2, 3),
        block_scales=((1, 1),),
        block_out_channels=(2,),
        head_fc_sizes=(3, 8),
        head_crop=(2, 2),
        block_fc_bottleneck=3,
        dropout_rate=0.0,
    )
    defaults.update(overrides)
    return PressNetConfig(**defaults)


def mini_mask(h=2, w=2):
    return np.ones((h, w, 2), dtype=bool)


class TestConfigValidation:
    def test_default_config_valid(self):
        PressNetConfig().validate()

    def test_stem_product_mismatch_names_equation(self):
        cfg = PressNetConfig(stem_fc_out=6000)
        with pytest.raises(ConfigError, match=r"6000.*6144"):
            cfg.validate()

    def test_crop_must_fit_final_resolution(self):
        cfg = mini_config(head_crop=(3, 2), head_fc_sizes=(3, 12))
        with pytest.raises(ConfigError, match="fit inside"):
            cfg.validate()

    def test_head_fc_must_match_crop_area(self):
        cfg = mini_config(head_fc_sizes=(3, 9))
        with pytest.raises(ConfigError, match="head_fc_sizes"):
            cfg.validate()

    def test_default_resolution_chain(self):
        chain = PressNetConfig().resolution_chain()
        assert chain == [(4, 3), (8, 3), (16, 6), (32, 12), (64, 24)]

    def test_config_json_round_trip(self):
        cfg = PressNetConfig(dropout_rate=0.25)
        restored = PressNetConfig.from_json(cfg.to_json())
        assert restored == cfg


class TestParameterCount:
    def test_miniature_matches_hand_count(self):
        # stem 4*12+12 = 60
        # block: sep5 (75+6+2) + bn 4 + sep3 (27+6+2) + bn 4 + 1x1 (6+2) + bn 4
        #        + fc 12->3 (39) + fc 3->8 (32) = 209
        # head: conv 3x3x2x2+2 (38) + fc 8->3 (27) + fc 3->8 (32) = 97
        model = PressNet(mini_config(), seed=0, footmask=mini_mask())
        assert model.parameter_count() == 60 + 209 + 97 == 366

    def test_default_count_frozen(self):
        model = build_pressnet(seed=1)
        assert model.parameter_count() == DEFAULT_PARAMETER_COUNT
        assert 1_500_000 <= model.parameter_count() <= 6_000_000

    def test_doubling_channels_increases_count(self):
        base = PressNet(mini_config(), seed=0, footmask=mini_mask())
        doubled = PressNet(
            mini_config(stem_reshape=(2, 2, 6), stem_fc_out=24, block_out_channels=(4,),
                        head_fc_sizes=(3, 8)),
            seed=0,
            footmask=mini_mask(),
        )
        assert doubled.parameter_count() > base.parameter_count()

    def test_unique_parameter_names(self):
        model = build_pressnet(seed=2)
        names = [p.name for p in model.parameters()]
        assert len(names) == len(set(names))
        assert "block1.conv5x5.depthwise" in names


class TestBuildDeterminism:
    def test_same_seed_bitwise_identical(self):
        a = PressNet(mini_config(), seed=7, footmask=mini_mask())
        b = PressNet(mini_config(), seed=7, footmask=mini_mask())
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert pa.name == pb.name
            assert np.array_equal(pa.data, pb.data)

    def test_different_seed_differs(self):
        a = PressNet(mini_config(), seed=7, footmask=mini_mask())
        b = PressNet(mini_config(), seed=8, footmask=mini_mask())
        assert not np.array_equal(a.stem.weight.data, b.stem.weight.data)


class TestForward:
    def test_shape_chain_for_any_batch(self):
        model = build_pressnet(seed=3)
        for batch in (1, 2, 5):
            out = model.forward(np.zeros((batch, 48), dtype=np.float32), "eval")
            assert out.shape == (batch, 60, 21, 2)

    def test_zero_input_finite_in_unit_range(self):
        model = build_pressnet(seed=4)
        out = model.forward(np.zeros((1, 48), dtype=np.float32), "eval").data
        assert np.all(np.isfinite(out))
        assert np.all(out >= 0.0)
        assert np.all(out <= 1.0)

    def test_masked_cells_zero_unmasked_strictly_inside_unit_interval(self):
        model = build_pressnet(seed=5)
        rng = np.random.default_rng(0)
        out = model.forward(rng.normal(size=(2, 48)).astype(np.float32), "eval").data
        mask = model.footmask
        assert np.all(out[:, ~mask] == 0.0)
        assert np.all(out[:, mask] > 0.0)
        assert np.all(out[:, mask] < 1.0)

    def test_all_false_footmask_annihilates(self):
        model = PressNet(mini_config(), seed=0, footmask=np.zeros((2, 2, 2), dtype=bool))
        out = model.forward(np.ones((3, 4), dtype=np.float32), "eval").data
        assert np.all(out == 0.0)

    def test_eval_forward_deterministic(self):
        model = build_pressnet(seed=6)
        x = np.random.default_rng(1).normal(size=(2, 48)).astype(np.float32)
        first = model.forward(x, "eval").data
        second = model.forward(x, "eval").data
        assert np.array_equal(first, second)

    def test_train_forward_reproducible_with_seeded_rng(self):
        model = PressNet(mini_config(dropout_rate=0.3), seed=0, footmask=mini_mask())
        x = np.random.default_rng(2).normal(size=(4, 4)).astype(np.float32)
        first = model.forward(x, "train", np.random.default_rng(33)).data
        second = model.forward(x, "train", np.random.default_rng(33)).data
        assert np.array_equal(first, second)

    def test_train_mode_without_rng_rejected(self):
        model = PressNet(mini_config(dropout_rate=0.5), seed=0, footmask=mini_mask())
        with pytest.raises(ConfigError):
            model.forward(np.zeros((1, 4), dtype=np.float32), "train")

    def test_wrong_input_width_rejected(self):
        model = PressNet(mini_config(), seed=0, footmask=mini_mask())
        with pytest.raises(ShapeError):
            model.forward(np.zeros((1, 5), dtype=np.float32), "eval")

    def test_footmask_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            PressNet(mini_config(), seed=0, footmask=np.ones((3, 3, 2), dtype=bool))


class TestResidualBlock:
    def test_first_block_geometry(self):
        cfg = PressNetConfig()
        rng = np.random.default_rng(0)
        block = ResidualBlock(1, 512, 256, (2, 1), (4, 3), cfg, rng, np.float32)
        x = Tensor(np.random.default_rng(1).normal(size=(1, 4, 3, 512)).astype(np.float32))
        out = block.forward(x, "eval")
        assert out.shape == (1, 8, 3, 256)

    def test_zero_input_zero_biases_gives_zero_output(self):
        cfg = mini_config()
        block = ResidualBlock(1, 3, 2, (1, 1), (2, 2), cfg, np.random.default_rng(0), np.float64)
        x = Tensor(np.zeros((2, 2, 2, 3)))
        out = block.forward(x, "eval").data
        assert np.all(np.isfinite(out))
        assert np.allclose(out, 0.0)

    def test_miniature_block_gradients(self):
        # 4x3 input, 4 -> 2 channels, bottleneck 3, against finite differences
        cfg = PressNetConfig(block_fc_bottleneck=3, dropout_rate=0.0, leaky_alpha=0.2)
        rng = np.random.default_rng(3)
        block = ResidualBlock(1, 4, 2, (2, 1), (4, 3), cfg, rng, np.float64)
        x_data = rng.normal(size=(2, 4, 3, 4))
        target = Tensor(rng.normal(size=(2, 8, 3, 2)))
        params = block.parameters()

        def build():
            return mse_loss(block.forward(Tensor(x_data), "train"), target)

        report = grad_check(build, params)
        assert report.max_relative_error < 1e-4, report.per_parameter


class TestMiniatureNetworkGradients:
    def test_full_miniature_pass_against_finite_differences(self):
        cfg = PressNetConfig(
            input_dim=6,
            stem_fc_out=48,
            stem_reshape=(4, 3, 4),
            block_scales=((2, 1),),
            block_out_channels=(2,),
            head_fc_sizes=(3, 24),
            head_crop=(6, 2),
            block_fc_bottleneck=3,
            dropout_rate=0.0,
        )
        rng = np.random.default_rng(4)
        mask = rng.random((6, 2, 2)) > 0.3
        model = PressNet(cfg, seed=11, footmask=mask, dtype=np.float64)
        x = rng.normal(size=(1, 6))
        target = Tensor(rng.uniform(0, 1, size=(1, 6, 2, 2)) * mask)

        def build():
            return mse_loss(model.forward(Tensor(x), "train"), target)

        report = grad_check(build, model.parameters())
        assert report.max_relative_error < 1e-4, report.per_parameter

    def test_zero_input_head_bias_gradients_nonzero_no_nan(self):
        cfg = mini_config()
        model = PressNet(cfg, seed=0, footmask=mini_mask(), dtype=np.float64)
        target = Tensor(np.zeros((1, 2, 2, 2)))
        loss = mse_loss(model.forward(Tensor(np.zeros((1, 4))), "train"), target)
        loss.backward()
        by_name = {p.name: p for p in model.parameters()}
        assert np.any(by_name["head.conv.bias"].grad != 0.0)
        for p in model.parameters():
            if p.grad is not None:
                assert np.all(np.isfinite(p.grad))


@pytest.mark.slow
def test_full_default_network_gradient_check():
    """Sampled finite-difference check of the full default architecture."""
    model = build_pressnet(PressNetConfig(dropout_rate=0.0), seed=21, dtype=np.float64)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(1, 48))
    target = Tensor(rng.uniform(0, 1, size=(1, 60, 21, 2)) * model.footmask)

    def build():
        return mse_loss(model.forward(Tensor(x), "train"), target)

    report = grad_check(build, model.parameters(), samples_per_param=2,
                        rng=np.random.default_rng(6))
    assert report.max_relative_error < 1e-4, report.per_parameter
