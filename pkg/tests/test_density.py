import numpy as np
import pytest

from oodkit.density import (
    ModelConfig,
    ablate_long_range,
    init_state,
    load_checkpoint,
    log_likelihood,
    log_likelihood_batch,
    mutate_for_background,
    predictive_stats,
    save_checkpoint,
    train,
)
from oodkit.density.mixture import mixture_log_pmf
from oodkit.density.model import batch_nll_and_grads
from oodkit.errors import DomainError, ShapeError
from oodkit.imaging import ImageTensor, SyntheticSpec, generate_synthetic, split

TOY = ModelConfig(context_radius=2, hidden_width=16, num_mix=3, epochs=2,
                  batch_size=16, seed=0)


def toy_data(count=60, seed=1, shape=(12, 12, 1), kind="oriented-gradient"):
    spec = SyntheticSpec(kind, count=count, seed=seed, shape=shape,
                         orientation="vertical" if kind == "oriented-gradient" else None)
    return generate_synthetic(spec)


@pytest.fixture(scope="module")
def toy_model():
    ds = toy_data(80)
    tr, va = split(ds, 0.2, seed=0)
    return train(TOY, tr, va), ds


class TestGradients:
    def test_analytic_matches_central_differences(self):
        rng = np.random.default_rng(0)
        ds = toy_data(8, shape=(8, 8, 1))
        state = init_state(ModelConfig(context_radius=2, hidden_width=12, num_mix=3,
                                       seed=3), (8, 8, 1))
        imgs = ds.stack()[:4]
        _, grads = batch_nll_and_grads(state, imgs)
        params = state.params
        h = 1e-4
        worst = 0.0
        for _ in range(20):
            j = int(rng.integers(len(params)))
            flat = params[j].reshape(-1)
            gflat = grads[j].reshape(-1)
            i = int(rng.integers(flat.size))
            orig = flat[i]
            flat[i] = orig + h
            up, _ = batch_nll_and_grads(state, imgs)
            flat[i] = orig - h
            dn, _ = batch_nll_and_grads(state, imgs)
            flat[i] = orig
            numeric = (up - dn) / (2 * h)
            denom = max(abs(numeric), abs(gflat[i]), 1e-8)
            worst = max(worst, abs(numeric - gflat[i]) / denom)
        assert worst < 1e-4


class TestZeroWeightState:
    def test_context_independent_analytic_ll(self):
        cfg = ModelConfig(context_radius=2, hidden_width=8, num_mix=4, seed=0)
        state = init_state(cfg, (6, 6, 1), zero_weights=True)
        k = cfg.num_mix
        v = 141
        img = ImageTensor(np.full((6, 6, 1), v, dtype=np.uint8))
        single = mixture_log_pmf(np.array([float(v)]), state.b2[:k],
                                 127.5 * (state.b2[k:2 * k] + 1.0),
                                 state.b2[2 * k:])[0]
        total = log_likelihood(state, img)
        assert total == pytest.approx(6 * 6 * 1 * single, rel=1e-12)
        # any image: every subpixel gets the same mixture
        noisy = ImageTensor(np.arange(36, dtype=np.uint8).reshape(6, 6, 1))
        _, vec = log_likelihood(state, noisy, per_subpixel=True)
        expect = mixture_log_pmf(np.arange(36, dtype=np.float64), state.b2[:k],
                                 127.5 * (state.b2[k:2 * k] + 1.0), state.b2[2 * k:])
        assert np.allclose(vec, expect, atol=1e-12)


class TestLogLikelihood:
    def test_additivity_exact(self, toy_model):
        state, ds = toy_model
        total, vec = log_likelihood(state, ds.images[0], per_subpixel=True)
        assert total == np.sum(vec)

    def test_causality(self, toy_model):
        state, ds = toy_model
        rng = np.random.default_rng(3)
        img = ds.images[0]
        h, w, c = img.pixels.shape
        _, base = log_likelihood(state, img, per_subpixel=True)
        for _ in range(5):
            pos = int(rng.integers(1, h * w * c))
            r, col, ch = pos // (w * c), (pos // c) % w, pos % c
            bumped = img.pixels.copy()
            bumped[r, col, ch] = (int(bumped[r, col, ch]) + 97) % 256
            _, vec = log_likelihood(state, ImageTensor(bumped), per_subpixel=True)
            assert np.array_equal(vec[:pos], base[:pos])

    def test_shape_mismatch(self, toy_model):
        state, _ = toy_model
        with pytest.raises(ShapeError):
            log_likelihood(state, ImageTensor(np.zeros((5, 5, 1), dtype=np.uint8)))

    def test_batch_matches_single(self, toy_model):
        state, ds = toy_model
        batch = log_likelihood_batch(state, ds.stack()[:5], batch_size=2)
        singles = [log_likelihood(state, img) for img in ds.images[:5]]
        assert np.allclose(batch, singles, rtol=0, atol=1e-9)

    def test_constant_trained_model_prefers_constants(self):
        const = toy_data(40, seed=5, kind="constant", shape=(8, 8, 1))
        tr, va = split(const, 0.25, seed=1)
        cfg = ModelConfig(context_radius=2, hidden_width=12, num_mix=3, epochs=1,
                          batch_size=8, seed=1)
        state = train(cfg, tr, va)
        mid = ImageTensor(np.full((8, 8, 1), 128, dtype=np.uint8))
        noise = ImageTensor(np.random.default_rng(0).integers(
            0, 256, size=(8, 8, 1), dtype=np.int64).astype(np.uint8))
        assert log_likelihood(state, mid) > log_likelihood(state, noise)


class TestTraining:
    def test_nll_improves_over_five_epochs(self):
        ds = toy_data(120, seed=2, shape=(12, 12, 1))
        tr, va = split(ds, 0.2, seed=0)
        cfg = ModelConfig(context_radius=2, hidden_width=16, num_mix=3, epochs=6,
                          batch_size=16, seed=0)
        state = train(cfg, tr, va)
        assert state.history[5]["train_nll"] <= state.history[0]["train_nll"]

    def test_same_seed_identical_weights(self):
        ds = toy_data(40, seed=4, shape=(8, 8, 1))
        tr, va = split(ds, 0.25, seed=0)
        cfg = ModelConfig(context_radius=2, hidden_width=8, num_mix=2, epochs=2,
                          batch_size=8, seed=9)
        a = train(cfg, tr, va)
        b = train(cfg, tr, va)
        for pa, pb in zip(a.params, b.params):
            assert np.array_equal(pa, pb)

    def test_history_recorded(self, toy_model):
        state, _ = toy_model
        assert len(state.history) == TOY.epochs
        assert all(np.isfinite(h["val_nll"]) for h in state.history)


class TestAblation:
    def test_noop_when_long_range_weights_zero(self, toy_model):
        state, ds = toy_model
        manual = state.copy()
        cols = list(state.layout.long_range_columns) + list(state.layout.positional_columns)
        manual.w1[:, cols] = 0.0
        ablated = ablate_long_range(manual)
        for img in ds.images[:3]:
            assert log_likelihood(ablated, img) == log_likelihood(manual, img)

    def test_preserves_shapes(self, toy_model):
        state, _ = toy_model
        ablated = ablate_long_range(state)
        for pa, pb in zip(state.params, ablated.params):
            assert pa.shape == pb.shape

    def test_changes_likelihood_when_weights_present(self, toy_model):
        state, ds = toy_model
        ablated = ablate_long_range(state)
        diffs = [abs(log_likelihood(state, img) - log_likelihood(ablated, img))
                 for img in ds.images[:5]]
        assert max(diffs) > 0


class TestMutation:
    def test_mu_zero_identity(self):
        img = toy_data(1, seed=0).images[0]
        assert mutate_for_background(img, 0.0, seed=1) == img

    def test_mu_one_resamples_everything(self):
        img = ImageTensor(np.zeros((64, 64, 1), dtype=np.uint8))
        out = mutate_for_background(img, 1.0, seed=2)
        mean = out.pixels.astype(float).mean()
        assert abs(mean - 127.5) < 3.0

    def test_mu_point_one_changed_fraction(self):
        img = ImageTensor(np.zeros((32, 32, 3), dtype=np.uint8))
        out = mutate_for_background(img, 0.1, seed=3)
        changed = (out.pixels != img.pixels).mean()
        n = img.pixels.size
        p = 0.1 * (255 / 256)  # a resample can collide with the original value
        sd = (p * (1 - p) / n) ** 0.5
        assert abs(changed - p) < 3 * sd

    def test_domain_error(self):
        img = toy_data(1, seed=0).images[0]
        with pytest.raises(DomainError):
            mutate_for_background(img, 1.5, seed=0)


class TestPredictiveStats:
    def test_perfect_location_zero_recon(self):
        from oodkit.density.model import location_gate

        cfg = ModelConfig(context_radius=2, hidden_width=8, num_mix=2, seed=0)
        state = init_state(cfg, (6, 6, 1), zero_weights=True)
        # anchor gates track the neighbour exactly; the location bias (active
        # only at the no-context corner, damped by its gate) lands on 128 too
        state.anchor_gates[:] = 1.0
        state.b2[cfg.num_mix:2 * cfg.num_mix] = 0.5 / (127.5 * location_gate(1.0))
        img = ImageTensor(np.full((6, 6, 1), 128, dtype=np.uint8))
        stats = predictive_stats(state, img)
        assert stats.recon_error == 0.0

    def test_scale_floor_bound(self, toy_model):
        state, ds = toy_model
        stats = predictive_stats(state, ds.images[0])
        assert stats.avg_scale >= np.exp(-7.0)
        assert stats.recon_error >= 0.0


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, toy_model, tmp_path):
        state, ds = toy_model
        path = tmp_path / "model.npz"
        save_checkpoint(state, path)
        again = load_checkpoint(path)
        for pa, pb in zip(state.params, again.params):
            assert np.array_equal(pa, pb)
        assert again.config == state.config
        assert again.history == state.history
        assert log_likelihood(again, ds.images[0]) == log_likelihood(state, ds.images[0])
