import numpy as np
import pytest

from modalbench.dataset import DatasetConfig, build
from modalbench.errors import InvalidArgumentError
from modalbench.filterbank import bias_params, pole_activation
from modalbench.predictor import (
    PredictorConfig,
    batch_loss,
    batch_loss_and_grad,
    encode,
    init_weights,
    load_checkpoint,
    predict,
    save_checkpoint,
    split_by_shape,
    train,
    TrainConfig,
)
from modalbench.spectral import SpectralConfig

TINY_ARCH = PredictorConfig(
    topology=(2, 1), embed_dim=4, channels=(2, 2, 4, 4), hidden=(8,), sample_rate=32000
)


@pytest.fixture(scope="module")
def tiny_train_dataset(tmp_path_factory):
    cfg = DatasetConfig(
        shapes=4,
        materials_per_shape=2,
        positions_per_pair=3,
        seed=3,
        spectral=SpectralConfig(n_samples=1024, n_mels=16),
        tri_range=(30, 60),
        n_modes=8,
    )
    return build(cfg, tmp_path_factory.mktemp("train_ds"))


def random_grid(seed):
    rng = np.random.default_rng(seed)
    return (rng.random((64, 64)) > 0.5).astype(np.float64)


class TestEncode:
    def test_deterministic_embedding(self):
        w = init_weights(PredictorConfig(), seed=1)
        g = random_grid(0)
        np.testing.assert_array_equal(encode(g, w), encode(g, w))

    def test_zero_weights_zero_embedding(self):
        w = init_weights(PredictorConfig(), seed=1)
        for name in w.arrays:
            w.arrays[name] = np.zeros_like(w.arrays[name])
        assert np.all(encode(random_grid(1), w) == 0.0)

    def test_distinct_shapes_distinct_embeddings(self):
        w = init_weights(PredictorConfig(), seed=2)
        e1, e2 = encode(random_grid(2), w), encode(random_grid(3), w)
        assert np.linalg.norm(e1 - e2) > 0

    def test_rejects_wrong_grid(self):
        w = init_weights(PredictorConfig(), seed=0)
        with pytest.raises(InvalidArgumentError):
            encode(np.zeros((32, 32)), w)


class TestPredict:
    def test_output_parameter_count(self):
        w = init_weights(PredictorConfig(topology=(16, 4)), seed=3)
        params = predict(encode(random_grid(4), w), np.full(7, 0.5), w)
        assert params.n_params == 16 * 4 * 5
        assert (params.L, params.M) == (16, 4)

    def test_zero_output_equals_bias(self):
        w = init_weights(PredictorConfig(topology=(8, 2)), seed=4)
        w.arrays["out_w"] = np.zeros_like(w.arrays["out_w"])
        w.arrays["out_b"] = np.zeros_like(w.arrays["out_b"])
        params = predict(encode(random_grid(5), w), np.full(7, 0.3), w)
        expected = bias_params(8, 2, w.config.sample_rate)
        np.testing.assert_array_equal(params.to_vector(), expected.to_vector())

    def test_predicted_banks_always_stable(self):
        for seed in range(5):
            w = init_weights(PredictorConfig(topology=(4, 2)), seed=seed)
            rng = np.random.default_rng(seed)
            params = predict(encode(random_grid(seed), w), rng.random(7), w)
            assert np.abs(pole_activation(params.p_raw)).max() < 1.0

    def test_embedding_cache_equivalence(self):
        w = init_weights(PredictorConfig(topology=(4, 1)), seed=6)
        g = random_grid(6)
        cached = encode(g, w)
        rng = np.random.default_rng(7)
        for _ in range(4):
            cond = rng.random(7)
            a = predict(cached, cond, w)
            b = predict(encode(g, w), cond, w)
            np.testing.assert_array_equal(a.to_vector(), b.to_vector())

    def test_dimension_mismatch(self):
        w = init_weights(PredictorConfig(), seed=0)
        with pytest.raises(InvalidArgumentError):
            predict(np.zeros(3), np.full(7, 0.5), w)
        with pytest.raises(InvalidArgumentError):
            predict(np.zeros(w.config.embed_dim), np.zeros(3), w)


class TestEndToEndGradient:
    def test_matches_finite_differences(self):
        cfg = SpectralConfig(n_samples=256, n_mels=8)
        w = init_weights(TINY_ARCH, seed=8)
        rng = np.random.default_rng(9)
        # smooth-valued grids: binary rasters put whole empty 3x3 patches at
        # pre-activation exactly 0, where the ReLU subgradient and central
        # differences legitimately disagree
        grids = rng.random((2, 64, 64))
        inv = np.array([0, 1, 0])
        conds = rng.random((3, 7))
        x_mels = rng.lognormal(0.0, 0.5, (3, cfg.n_mels))
        loss0, grads = batch_loss_and_grad(w, grids, inv, conds, x_mels, cfg)
        flat = w.flatten()
        gflat = np.concatenate([grads[n].reshape(-1) for n in w.arrays])

        def loss_at(vec):
            wx = w.copy()
            wx.unflatten(vec)
            return batch_loss(wx, grids, inv, conds, x_mels, cfg)

        def central_fd(entries, step):
            out = np.empty(len(entries))
            for j, i in enumerate(entries):
                up, dn = flat.copy(), flat.copy()
                h = step * max(1.0, abs(flat[i]))
                up[i] += h
                dn[i] -= h
                out[j] = (loss_at(up) - loss_at(dn)) / (2 * h)
            return out

        all_entries = np.arange(flat.size)
        fd = central_fd(all_entries, 1e-6)
        denom = np.maximum(np.maximum(np.abs(gflat), np.abs(fd)), 1e-300)
        rel = np.abs(gflat - fd) / denom
        # float64 FD at 1e-6 cannot resolve entries with |g| << loss scale;
        # re-check flagged entries at a larger central step
        retry = np.flatnonzero(rel >= 1e-3)
        if retry.size:
            fd2 = central_fd(retry, 1e-3)
            denom2 = np.maximum(np.maximum(np.abs(gflat[retry]), np.abs(fd2)), 1e-300)
            rel[retry] = np.minimum(rel[retry], np.abs(gflat[retry] - fd2) / denom2)
        resolved = np.maximum(np.abs(gflat), np.abs(fd)) >= 1e-8
        assert rel[resolved].max() < 1e-3
        assert np.abs(gflat - fd)[~resolved].max() < 1e-8


class TestTrain:
    def test_split_by_shape_disjoint(self):
        shape_ids = np.repeat(np.arange(8), 5)
        tr, va, vs = split_by_shape(shape_ids, 8, 0.25, seed=0)
        assert set(shape_ids[tr]) & set(shape_ids[va]) == set()
        assert len(vs) == 2
        tr2, va2, _ = split_by_shape(shape_ids, 8, 0.25, seed=0)
        np.testing.assert_array_equal(tr, tr2)

    def test_loss_decreases_and_metrics(self, tiny_train_dataset):
        hyper = TrainConfig(
            batch_size=8, base_lr=1e-3, max_steps=40, val_interval=10, val_frac=0.25, seed=1
        )
        weights, metrics = train(tiny_train_dataset, topology=(4, 1), hyper=hyper)
        assert len(metrics.history) == 40
        assert metrics.best_val < np.inf
        assert metrics.baseline_val > 0
        first = np.mean([l for _, l, _ in metrics.history[:5]])
        last = np.mean([l for _, l, _ in metrics.history[-5:]])
        assert last < first
        assert set(metrics.val_shapes) & set(metrics.train_shapes) == set()

    def test_deterministic(self, tiny_train_dataset):
        hyper = TrainConfig(batch_size=8, max_steps=10, val_interval=5, seed=2)
        _, m1 = train(tiny_train_dataset, topology=(2, 1), hyper=hyper)
        _, m2 = train(tiny_train_dataset, topology=(2, 1), hyper=hyper)
        assert m1.history == m2.history
        assert m1.val_history == m2.val_history

    def test_lr_schedule_in_history(self, tiny_train_dataset):
        hyper = TrainConfig(
            batch_size=8, base_lr=1e-3, decay=0.9, decay_interval=4, max_steps=9,
            val_interval=100, seed=3,
        )
        _, metrics = train(tiny_train_dataset, topology=(2, 1), hyper=hyper)
        lrs = [lr for _, _, lr in metrics.history]
        assert lrs[:4] == [1e-3] * 4
        assert lrs[4:8] == pytest.approx([9e-4] * 4)
        assert lrs[8] == pytest.approx(8.1e-4)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        w = init_weights(PredictorConfig(topology=(4, 2), hidden=(16, 16)), seed=5)
        path = tmp_path / "ckpt.bin"
        save_checkpoint(path, w)
        back = load_checkpoint(path)
        assert back.config == w.config
        assert back.seed == w.seed
        assert back.material_ranges == {k: tuple(v) for k, v in w.material_ranges.items()}
        assert list(back.arrays) == list(w.arrays)
        for name in w.arrays:
            np.testing.assert_array_equal(
                back.arrays[name], w.arrays[name].astype("<f4").astype(np.float64)
            )

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 100)
        with pytest.raises(InvalidArgumentError):
            load_checkpoint(path)
