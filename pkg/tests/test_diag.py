import numpy as np
import pytest

from kanlab.diag import (
    MetricLog, SNRProbe, detect_stages, geometric_complexity, relative_l2,
    snr,
)
from kanlab.diffcore import DTYPE, Jet2, ParamStore, Tape, affine, concat
from kanlab.models import MLP, Embedding, KKan
from kanlab.basis import OuterBasis
from kanlab.seeding import child_rng


class TestRelativeL2:
    def test_exact_match_is_zero(self):
        v = np.array([1.0, -2.0, 3.0])
        assert relative_l2(v, v) == 0.0

    def test_zero_prediction_is_one(self):
        v = np.array([0.3, -1.2, 4.0])
        assert relative_l2(v, np.zeros(3)) == pytest.approx(1.0, abs=1e-15)

    def test_hand_value(self):
        assert relative_l2([1.0, 0.0], [1.0, 1.0]) == pytest.approx(1.0, abs=1e-15)

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            relative_l2(np.zeros(4), np.ones(4))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            relative_l2(np.ones(3), np.ones(4))

    def test_flattens_grids(self):
        rng = child_rng(11, "diag", "l2")
        a = rng.normal(size=(5, 7))
        b = rng.normal(size=(5, 7))
        assert relative_l2(a, b) == pytest.approx(
            np.linalg.norm(a - b) / np.linalg.norm(a), rel=1e-15)


class TestSnr:
    def test_identical_batches_hit_sentinel(self):
        g = np.tile([[1.0, -2.0, 0.5]], (6, 1))
        assert snr(g) == 1e12

    def test_orthogonal_pair(self):
        assert snr([[1.0, 0.0], [0.0, 1.0]]) == pytest.approx(1.0, abs=1e-15)

    def test_constructed_spread_matches_hand_formula(self):
        rng = child_rng(12, "diag", "snr")
        mu = rng.normal(size=9)
        offsets = rng.normal(size=(8, 9))
        offsets -= offsets.mean(axis=0)
        g = mu + 0.01 * offsets
        mean = g.mean(axis=0)
        std = np.sqrt(((g - mean) ** 2).mean(axis=0))
        expected = np.linalg.norm(mean) / np.linalg.norm(std)
        assert snr(g) == pytest.approx(expected, rel=1e-12)

    def test_population_not_sample_std(self):
        g = np.array([[0.0], [2.0]])
        # population std of {0, 2} is 1, sample std would be sqrt(2)
        assert snr(g) == pytest.approx(1.0, abs=1e-15)

    def test_permutation_invariant(self):
        rng = child_rng(13, "diag", "perm")
        g = rng.normal(size=(10, 6))
        shuffled = g[rng.permutation(10)]
        assert snr(g) == pytest.approx(snr(shuffled), rel=1e-14)

    def test_huge_ratio_capped(self):
        g = np.tile([[1e3, 0.0]], (4, 1))
        g[:, 1] = 1e-11 * np.array([1.0, -1.0, 1.0, -1.0])
        assert snr(g) == 1e12

    def test_too_few_batches_rejected(self):
        with pytest.raises(ValueError):
            snr([[1.0, 2.0]])
        with pytest.raises(ValueError):
            snr(np.ones(5))


class _LinearMap:
    """f(x) = A x, as a minimal model-shaped object."""

    d = 2
    out_dim = 2
    name = "lin"

    def init(self, store, rng):
        store.add("lin.A", np.array([[1.0, 2.0], [3.0, 4.0]]))
        return store

    def forward(self, p, cols):
        return affine(concat(cols, axis=1), p["lin.A"])


class TestGeometricComplexity:
    def test_linear_map_gives_frobenius_norm(self):
        model = _LinearMap()
        store = model.init(ParamStore(), None)
        rng = child_rng(14, "diag", "gc")
        X = rng.uniform(-2, 2, size=(17, 2))
        assert geometric_complexity(model, store, X) == pytest.approx(30.0, abs=1e-10)

    def test_constant_model_is_zero(self):
        model = MLP(2, [6, 6])
        store = model.init(ParamStore(), child_rng(15, "diag", "const"))
        store.view("mlp.body.L0.w")[:] = 0.0
        assert geometric_complexity(model, store, np.zeros((5, 2)) + 0.3) == 0.0

    def test_matches_finite_difference_jacobian(self):
        model = MLP(2, [7, 7])
        store = model.init(ParamStore(), child_rng(16, "diag", "fd"))
        rng = child_rng(17, "diag", "fdpts")
        X = rng.uniform(-1, 1, size=(11, 2))
        h = 1e-5
        total = 0.0
        for j in range(2):
            dx = np.zeros((1, 2))
            dx[0, j] = h
            du = (model.predict(store, X + dx) - model.predict(store, X - dx)) / (2 * h)
            total += float(np.sum(du ** 2))
        fd = total / X.shape[0]
        gc = geometric_complexity(model, store, X)
        assert gc == pytest.approx(fd, rel=1e-5)

    def test_invariant_to_output_shift(self):
        model = MLP(2, [6, 6])
        store = model.init(ParamStore(), child_rng(18, "diag", "shift"))
        rng = child_rng(19, "diag", "shiftpts")
        X = rng.uniform(-1, 1, size=(9, 2))
        before = geometric_complexity(model, store, X)
        store.view("mlp.out.b")[:] += 5.0
        after = geometric_complexity(model, store, X)
        assert after == pytest.approx(before, rel=1e-12)

    def test_equals_sum_of_squared_partials(self):
        model = KKan(2, 4, 2, [6], OuterBasis("chebyshev", 3),
                     embeddings=[Embedding("identity"), Embedding("fourier", 2)])
        store = model.init(ParamStore(), child_rng(20, "diag", "kkan"))
        rng = child_rng(21, "diag", "kkanpts")
        X = rng.uniform(-1, 1, size=(8, 2))
        p = {name: store.view(name) for name in store.segments}
        acc = np.zeros((8, 1))
        for j in range(2):
            tp = Tape()
            cols = [X[:, [i]] for i in range(2)]
            cols[j] = Jet2.seed(tp.const(cols[j]), order=1)
            u = model.forward(p, cols)
            acc += np.asarray(u.d1.val) ** 2
        assert geometric_complexity(model, store, X) == pytest.approx(
            float(acc.mean(axis=1).sum()) / 8.0, rel=1e-12)


class TestMetricLog:
    def test_records_and_series(self):
        log = MetricLog()
        log.add(0, "loss", 1.0)
        log.add(100, "loss", 0.5)
        log.add(100, "snr", 3.0)
        its, vals = log.series("loss")
        np.testing.assert_array_equal(its, [0, 100])
        np.testing.assert_allclose(vals, [1.0, 0.5])
        assert log.last("loss") == 0.5
        assert log.names() == ["loss", "snr"]

    def test_backwards_iteration_rejected(self):
        log = MetricLog()
        log.add(10, "loss", 1.0)
        with pytest.raises(ValueError):
            log.add(9, "loss", 0.9)

    def test_wall_times_non_decreasing(self):
        log = MetricLog()
        for k in range(5):
            log.add(k, "x", float(k))
        walls = [r.wall for r in log.records]
        assert all(b >= a for a, b in zip(walls, walls[1:]))

    def test_missing_name_raises(self):
        with pytest.raises(KeyError):
            MetricLog().last("nope")


class TestSnrProbe:
    def test_sub_batches_partition(self):
        probe = SNRProbe(residual=None, n=50, n_batches=10)
        parts = probe.sub_batches()
        assert len(parts) == 10
        joined = np.sort(np.concatenate(parts))
        np.testing.assert_array_equal(joined, np.arange(50))

    def test_validation(self):
        with pytest.raises(ValueError):
            SNRProbe(residual=None, n=50, n_batches=1)
        with pytest.raises(ValueError):
            SNRProbe(residual=None, n=55, n_batches=10)


class TestDetectStages:
    def test_recovers_plateau_boundaries(self):
        rng = child_rng(22, "diag", "stages")
        vals = np.concatenate([
            np.full(30, 50.0), np.full(25, 0.05), np.full(25, 2.0),
        ]) * np.exp(rng.normal(scale=0.05, size=80))
        its = np.arange(80) * 100
        out = detect_stages(its, vals)
        assert out["fitting"] == (0, 2900)
        assert out["transition"] == (3000, 5400)
        assert out["diffusion"] == (5500, 7900)

    def test_short_series_passes(self):
        assert detect_stages([0, 100], [1.0, 2.0]) is None
