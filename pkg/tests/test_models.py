import numpy as np
import pytest
from conftest import clean_convstack_instance, model_loss_and_grad

from xpucost.dataset import TargetKind
from xpucost.errors import ConfigError, LengthMismatchError, ModeMismatchError
from xpucost.models import (
    ModelConfig,
    build,
    predict,
    predict_batch,
    predict_rounded,
    round_half_away,
    with_target_norm,
)
from xpucost.nn.ops import grad_check
from xpucost.tokenizer import BOS_ID, EOS_ID, Mode, PAD_ID, TokenSequence


def seq(ids, mode=Mode.OPS_ONLY):
    return TokenSequence(tuple(ids), mode, len(ids))


def padded_ids(content, length):
    return [BOS_ID, *content, EOS_ID] + [PAD_ID] * (length - len(content) - 2)


class TestModelConfig:
    def test_default_convstack_param_count(self):
        cfg = ModelConfig("convstack", vocab_size=500, max_len=64)
        model = build(cfg)
        expected = 500 * 64  # embedding
        prev = 64
        for out_ch, k in cfg.conv_layers:
            expected += out_ch * prev * k + out_ch
            prev = out_ch
        sizes = (prev, *cfg.fc_sizes)  # global pool -> [1 x 64]
        for a, b in zip(sizes, sizes[1:]):
            expected += b * a + b
        assert model.param_count() == expected

    def test_conv_shrinkage_must_leave_room(self):
        with pytest.raises(ConfigError):
            ModelConfig("convstack", vocab_size=10, max_len=6)  # six k=2 convs eat it all
        ModelConfig("convstack", vocab_size=10, max_len=7)  # one position left: fine

    def test_fc_must_end_in_one(self):
        with pytest.raises(ConfigError):
            ModelConfig("bagfc", vocab_size=10, max_len=8, fc_sizes=(32, 2))

    def test_unknown_architecture(self):
        with pytest.raises(ConfigError):
            ModelConfig("transformer", vocab_size=10, max_len=8)

    def test_per_layer_kernel_sizes_variant(self):
        # the operand-modeling variant: mixed filter sizes
        cfg = ModelConfig(
            "convstack",
            vocab_size=30,
            max_len=32,
            conv_layers=((16, 3), (16, 3), (16, 2), (16, 2), (16, 2), (16, 2)),
            fc_sizes=(8, 1),
            embed_dim=8,
        )
        model = build(cfg)
        out = model.forward(np.zeros((2, 32), dtype=np.int64))
        assert out.shape == (2,)

    def test_windowed_pooling_config(self):
        cfg = ModelConfig(
            "convstack", vocab_size=30, max_len=32, embed_dim=8,
            conv_layers=((8, 2),) * 6, fc_sizes=(8, 1), pool_window=4, pool_stride=2,
        )
        model = build(cfg)
        assert model.forward(np.zeros((1, 32), dtype=np.int64)).shape == (1,)
        with pytest.raises(ConfigError):
            ModelConfig(
                "convstack", vocab_size=30, max_len=10, embed_dim=8,
                conv_layers=((8, 2),) * 6, pool_window=40,
            )


class TestBagFC:
    CFG = ModelConfig("bagfc", vocab_size=24, max_len=12, embed_dim=8, fc_sizes=(8, 1))

    def test_padding_extension_invariance(self):
        m = build(self.CFG, seed=1)
        a = np.array([padded_ids([5, 6, 7], 12)])
        b = np.array([[BOS_ID, 5, 6, 7, EOS_ID] + [PAD_ID] * 2])
        assert m.forward(a)[0] == pytest.approx(m.forward(b[:, :7])[0])

    def test_output_depends_only_on_non_pad_tokens(self):
        m = build(self.CFG, seed=1)
        lone = np.array([[9] + [PAD_ID] * 11])
        other = np.array([[10] + [PAD_ID] * 11])
        assert m.forward(lone)[0] != m.forward(other)[0]
        longer = np.array([[9] + [PAD_ID] * 5])
        assert m.forward(lone)[0] == pytest.approx(m.forward(longer)[0])

    def test_permutation_invariance(self):
        m = build(self.CFG, seed=2)
        a = np.array([padded_ids([4, 5, 6, 7], 12)])
        b = np.array([padded_ids([7, 5, 6, 4], 12)])
        assert m.forward(a)[0] == pytest.approx(m.forward(b)[0])

    def test_gradients(self):
        rng = np.random.default_rng(0)
        m = build(self.CFG, seed=3)
        for _, p in m.params_named():  # keep relu preactivations off zero
            if p.ndim == 1:
                p += rng.uniform(0.1, 0.2, size=p.shape)
        ids = rng.integers(1, 24, size=(3, 12))
        y = rng.standard_normal(3)
        err = grad_check(model_loss_and_grad(m, ids, y), [p.copy() for p in m.params()], eps=1e-4)
        assert err <= 1e-4


class TestConvStack:
    def test_not_permutation_invariant(self):
        cfg = ModelConfig(
            "convstack", vocab_size=24, max_len=12, embed_dim=8,
            conv_layers=((8, 2),) * 6, fc_sizes=(8, 1),
        )
        m = build(cfg, seed=4)
        a = np.array([padded_ids([4, 5, 6, 7], 12)])
        b = np.array([padded_ids([7, 6, 5, 4], 12)])
        assert m.forward(a)[0] != pytest.approx(m.forward(b)[0])

    @pytest.mark.parametrize("master_seed", range(4))
    def test_full_stack_gradients(self, master_seed):
        m, ids, y = clean_convstack_instance(master_seed, eps=1e-4)
        err = grad_check(model_loss_and_grad(m, ids, y), [p.copy() for p in m.params()], eps=1e-4)
        assert err <= 1e-4


class TestRecurrent:
    CFG = ModelConfig(
        "recurrent", vocab_size=24, max_len=12, embed_dim=6,
        recurrent_hidden=5, fc_sizes=(4, 1),
    )

    def test_uses_last_non_pad_state(self):
        m = build(self.CFG, seed=5)
        short = np.array([[BOS_ID, 4, 5, EOS_ID]])
        padded = np.array([[BOS_ID, 4, 5, EOS_ID] + [PAD_ID] * 8])
        assert m.forward(short)[0] == pytest.approx(m.forward(padded)[0])

    def test_order_sensitive(self):
        m = build(self.CFG, seed=5)
        a = np.array([padded_ids([4, 5, 6], 12)])
        b = np.array([padded_ids([6, 5, 4], 12)])
        assert m.forward(a)[0] != pytest.approx(m.forward(b)[0])

    def test_gradients(self):
        rng = np.random.default_rng(1)
        m = build(self.CFG, seed=6)
        for name, p in m.params_named():
            if p.ndim == 1:
                p += rng.uniform(0.1, 0.2, size=p.shape)
        ids = rng.integers(1, 24, size=(2, 7))
        y = rng.standard_normal(2)
        err = grad_check(model_loss_and_grad(m, ids, y), [p.copy() for p in m.params()], eps=1e-4)
        assert err <= 1e-4


class TestPredict:
    CFG = ModelConfig("bagfc", vocab_size=16, max_len=10, embed_dim=4, fc_sizes=(4, 1))

    def _model(self, kind=TargetKind.REGISTER_PRESSURE):
        m = build(self.CFG, seed=7)
        m.mode = Mode.OPS_ONLY
        m.target_kind = kind
        return m

    def test_deterministic(self):
        m = self._model()
        s = seq(padded_ids([4, 5], 10))
        assert predict(m, s) == predict(m, s)

    def test_mode_mismatch(self):
        m = self._model()
        with pytest.raises(ModeMismatchError):
            predict(m, seq(padded_ids([4], 10), mode=Mode.OPS_AND_OPERANDS))

    def test_length_mismatch(self):
        m = self._model()
        with pytest.raises(LengthMismatchError):
            predict(m, seq(padded_ids([4], 8)))

    def test_utilization_clamped_at_predict_time(self):
        m = self._model(TargetKind.XPU_UTILIZATION)
        with_target_norm(m, 5.0, 1.0)  # denormalized raw output lands near 5
        value = predict(m, seq(padded_ids([4, 5], 10)))
        assert value == 1.0

    def test_register_pressure_not_clamped_above_one(self):
        m = self._model()
        with_target_norm(m, 5.0, 1.0)
        assert predict(m, seq(padded_ids([4, 5], 10))) > 1.0

    def test_predict_batch_matches_predict(self):
        m = self._model()
        ids = [padded_ids([4, 5], 10), padded_ids([6], 10)]
        batch = predict_batch(m, np.array(ids))
        singles = [predict(m, seq(i)) for i in ids]
        assert np.allclose(batch, singles)


class TestRounding:
    @pytest.mark.parametrize("raw,expected", [(4.4, 4), (4.5, 5), (-0.3, 0), (0.5, 1), (-2.9, 0)])
    def test_round_half_away_floored(self, raw, expected):
        assert max(0, round_half_away(raw)) == expected

    def test_predict_rounded(self):
        cfg = ModelConfig("bagfc", vocab_size=16, max_len=6, embed_dim=4, fc_sizes=(4, 1))
        m = build(cfg, seed=8)
        m.mode = Mode.OPS_ONLY
        m.target_kind = TargetKind.REGISTER_PRESSURE
        s = seq(padded_ids([4], 6))
        raw = predict(m, s)
        assert predict_rounded(m, s) == max(0, round_half_away(raw))
