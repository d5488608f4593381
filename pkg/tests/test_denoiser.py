import dataclasses

import numpy as np
import pytest

from percdiff.augmentation import AugmentationSpec
from percdiff.denoiser import (DivergenceError, ModelConfig, OptimizerState,
                               TrainConfig, adamw_update, backward,
                               forward, forward_raw, init_params, load_checkpoint,
                               log_to_csv, save_checkpoint, time_embedding, train,
                               train_step, TrainLogEntry)
from percdiff.schedule import make_schedule
from percdiff.strategy import make_strategy
from percdiff.toytask import TaskConfig, generate_dataset


@pytest.fixture(scope="module")
def tiny():
    mc = ModelConfig(grid_size=4, hidden=(8, 8), time_emb_dim=8)
    return mc, init_params(mc, np.random.default_rng(0))


class TestTopology:
    def test_param_count_closed_form(self):
        mc = ModelConfig(grid_size=16, cond_dim=11, hidden=(256, 256),
                         time_emb_dim=32, skip=False)
        d_in = 2 * 3 * 16 * 16 + 11 + 32
        expect = (d_in * 256 + 256) + (256 * 256 + 256) + (256 * 768 + 768)
        assert mc.param_count() == expect
        with_skip = dataclasses.replace(mc, skip=True)
        assert with_skip.param_count() == expect + d_in * 768

    def test_init_deterministic(self):
        mc = ModelConfig(grid_size=4, hidden=(8,), time_emb_dim=8)
        a = init_params(mc, np.random.default_rng(3))
        b = init_params(mc, np.random.default_rng(3))
        assert np.array_equal(a.flat(), b.flat())

    def test_biases_and_bypass_start_zero(self, tiny):
        _, params = tiny
        for b in params.biases:
            assert np.all(b == 0)
        assert np.all(params.skip_weight == 0)

    def test_flat_length_matches_count(self, tiny):
        mc, params = tiny
        assert len(params.flat()) == mc.param_count()


class TestForward:
    def test_deterministic(self, tiny):
        mc, params = tiny
        rng = np.random.default_rng(1)
        x = rng.standard_normal((3, 4, 4))
        scene = rng.uniform(-1, 1, (3, 4, 4))
        cond = rng.random(11)
        a = forward(params, x, scene, cond, 37)
        b = forward(params, x, scene, cond, 37)
        assert np.array_equal(a, b)
        assert a.shape == (3, 4, 4)
        assert np.all(np.isfinite(a))

    def test_condition_path_not_degenerate(self, tiny):
        mc, params = tiny
        rng = np.random.default_rng(2)
        x = rng.standard_normal((3, 4, 4))
        scene = rng.uniform(-1, 1, (3, 4, 4))
        with_cond = forward(params, x, scene, np.ones(11), 10)
        without = forward(params, x, scene, np.zeros(11), 10)
        assert not np.array_equal(with_cond, without)

    def test_zero_weights_output_bias(self, tiny):
        mc, _ = tiny
        params = init_params(mc, np.random.default_rng(4))
        for w in params.weights:
            w[:] = 0
        params.skip_weight[:] = 0
        params.biases[-1][:] = 0.25
        out = forward(params, np.zeros((3, 4, 4)), np.zeros((3, 4, 4)),
                      np.zeros(11), 5)
        np.testing.assert_allclose(out, 0.25)

    def test_batched_matches_single(self, tiny):
        mc, params = tiny
        rng = np.random.default_rng(5)
        xs = rng.standard_normal((3, 3, 4, 4))
        scenes = rng.uniform(-1, 1, (3, 3, 4, 4))
        conds = rng.random((3, 11))
        batch = forward(params, xs, scenes, conds, 12)
        for i in range(3):
            single = forward(params, xs[i], scenes[i], conds[i], 12)
            np.testing.assert_allclose(batch[i], single, atol=1e-12)

    def test_time_embedding_shape_and_range(self):
        emb = time_embedding(np.array([0, 500, 1000]), 32)
        assert emb.shape == (3, 32)
        assert np.all(np.abs(emb) <= 1.0)
        assert not np.array_equal(emb[0], emb[1])


class TestGradients:
    def test_finite_difference_check(self, tiny):
        mc, _ = tiny
        rng = np.random.default_rng(6)
        max_err = 0.0
        for batch_i in range(5):
            params = init_params(mc, np.random.default_rng(batch_i))
            params.skip_weight[:] = rng.uniform(-0.05, 0.05,
                                                params.skip_weight.shape)
            X = rng.standard_normal((6, mc.input_dim))
            Y = rng.standard_normal((6, mc.output_dim))
            out, acts = forward_raw(params, X, keep_cache=True)
            d_out = 2.0 * (out - Y) / (out - Y).size
            gw, gb, gs = backward(params, acts, d_out)

            def loss():
                o = forward_raw(params, X)
                return float(np.mean((o - Y) ** 2))

            h = 1e-6
            arrays = list(zip(params.weights, gw)) + list(zip(params.biases, gb))
            arrays.append((params.skip_weight, gs))
            for arr, g in arrays:
                flat_idx = rng.integers(0, arr.size, size=8)
                for fi in flat_idx:
                    ij = np.unravel_index(fi, arr.shape)
                    orig = arr[ij]
                    arr[ij] = orig + h
                    lp = loss()
                    arr[ij] = orig - h
                    lm = loss()
                    arr[ij] = orig
                    fd = (lp - lm) / (2 * h)
                    denom = max(abs(fd), abs(g[ij]), 1e-8)
                    max_err = max(max_err, abs(fd - g[ij]) / denom)
        assert max_err <= 1e-4


@pytest.fixture(scope="module")
def setup():
    sch = make_schedule(100)
    ds = generate_dataset(TaskConfig(), 8, seed=1)
    mc = ModelConfig(grid_size=16, hidden=(16, 16), time_emb_dim=8)
    return sch, ds, mc


class TestTrainStep:

    def _batch(self, ds):
        return list(zip(ds.scenes, ds.conditions, ds.gt_masks))

    def test_zero_learning_rate_freezes_params(self, setup):
        sch, ds, mc = setup
        params = init_params(mc, np.random.default_rng(0))
        before = params.flat().copy()
        cfg = TrainConfig(learning_rate=1e-30, epochs=1)
        opt = OptimizerState.init(params)
        strat = make_strategy("uniform", sch.T)
        loss = train_step(params, opt, self._batch(ds), cfg, sch, strat,
                          np.random.default_rng(1))
        assert np.isfinite(loss)
        np.testing.assert_allclose(params.flat(), before, atol=1e-20)

    def test_eps_corrected_equals_eps_without_aug(self, setup):
        sch, ds, mc = setup
        losses = {}
        for kind in ("eps", "eps_corrected"):
            params = init_params(mc, np.random.default_rng(0))
            opt = OptimizerState.init(params)
            cfg = TrainConfig(target_kind=kind,
                              aug=AugmentationSpec(enabled=False))
            strat = make_strategy("uniform", sch.T)
            losses[kind] = train_step(params, opt, self._batch(ds), cfg, sch,
                                      strat, np.random.default_rng(2))
        assert losses["eps"] == losses["eps_corrected"]

    def test_empty_batch_rejected(self, setup):
        sch, ds, mc = setup
        params = init_params(mc, np.random.default_rng(0))
        with pytest.raises(ValueError):
            train_step(params, OptimizerState.init(params), [],
                       TrainConfig(), sch, make_strategy("uniform", sch.T),
                       np.random.default_rng(0))

    def test_divergence_detected(self, setup):
        sch, ds, mc = setup
        params = init_params(mc, np.random.default_rng(0))
        params.weights[0][:] = np.inf
        with pytest.raises(DivergenceError):
            train_step(params, OptimizerState.init(params), self._batch(ds),
                       TrainConfig(), sch, make_strategy("uniform", sch.T),
                       np.random.default_rng(0))


class TestTrainLoop:
    def test_reproducible_and_progressing(self):
        sch = make_schedule(100)
        ds = generate_dataset(TaskConfig(), 16, seed=2)
        mc = ModelConfig(grid_size=16, hidden=(16, 16), time_emb_dim=8)
        cfg = TrainConfig(epochs=5, batch_size=8, target_kind="x0", seed=3)
        p1, log1 = train(ds, cfg, sch, model_config=mc)
        p2, log2 = train(ds, cfg, sch, model_config=mc)
        assert np.array_equal(p1.flat(), p2.flat())
        assert [e.loss for e in log1] == [e.loss for e in log2]
        assert log1[-1].loss < log1[0].loss

    def test_log_csv_schema(self):
        log = [TrainLogEntry(epoch=0, step=4, loss=0.5, val_oiou=0.25),
               TrainLogEntry(epoch=1, step=8, loss=0.4, val_oiou=None)]
        text = log_to_csv(log)
        lines = text.splitlines()
        assert lines[0] == "epoch,step,loss,val_oiou"
        assert lines[1].startswith("0,4,0.5,")
        assert lines[2].endswith(",")  # empty val column

    def test_empty_dataset_rejected(self):
        sch = make_schedule(10)
        ds = generate_dataset(TaskConfig(), 1, seed=0)
        ds.scenes.clear(); ds.conditions.clear(); ds.gt_masks.clear()
        with pytest.raises(ValueError):
            train(ds, TrainConfig(), sch)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        mc = ModelConfig(grid_size=4, hidden=(8, 8), time_emb_dim=8)
        params = init_params(mc, np.random.default_rng(9))
        params.skip_weight[:] = 0.01
        cfg = TrainConfig(target_kind="x0", seed=17)
        path = tmp_path / "ck.bin"
        save_checkpoint(path, params, cfg, extra={"note": "test"})
        back, header = load_checkpoint(path)
        assert np.array_equal(back.flat(), params.flat())
        assert header["target_kind"] == "x0"
        assert header["seed"] == 17
        assert header["note"] == "test"
        assert back.config == mc

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_truncated_blob_rejected(self, tmp_path):
        mc = ModelConfig(grid_size=4, hidden=(8,), time_emb_dim=8)
        params = init_params(mc, np.random.default_rng(1))
        path = tmp_path / "ck.bin"
        save_checkpoint(path, params, TrainConfig())
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(ValueError):
            load_checkpoint(path)


class TestAdamW:
    def test_decay_applies_to_weights_only(self):
        mc = ModelConfig(grid_size=4, hidden=(8,), time_emb_dim=8, skip=False)
        params = init_params(mc, np.random.default_rng(0))
        params.biases[0][:] = 1.0
        opt = OptimizerState.init(params)
        zeros_w = [np.zeros_like(w) for w in params.weights]
        zeros_b = [np.zeros_like(b) for b in params.biases]
        w_before = params.weights[0].copy()
        adamw_update(params, opt, zeros_w, zeros_b, None, lr=0.1, weight_decay=0.5)
        assert np.all(params.biases[0] == 1.0)          # no decay on biases
        np.testing.assert_allclose(params.weights[0], w_before * (1 - 0.05))

    def test_cond_drop_frequency(self):
        rng = np.random.default_rng(0)
        hits = sum(rng.uniform() < 0.1 for _ in range(10_000))
        assert abs(hits / 10_000 - 0.1) < 0.01
