import numpy as np
import pytest

from kanlab.basis import OuterBasis
from kanlab.diffcore import Jet2, ParamStore, Tape, fd_check, vmean
from kanlab.models import CKan, EbMLP, Embedding, GroupedKKan, KKan, MLP, embed
from kanlab.seeding import child_rng


def built(model, seed=0):
    store = ParamStore()
    model.init(store, child_rng(seed, "model", model.name))
    return store


def loss_builder(model, X, y):
    def build(s):
        tp = Tape()
        p = tp.params(s)
        cols = [tp.const(X[:, [j]]) for j in range(model.d)]
        r = model.forward(p, cols) - tp.const(y)
        return tp, vmean(r * r)
    return build


class TestParameterCounts:
    def test_wide_mlp_matches_published_total(self):
        store = built(MLP(2, [100] * 5, 1))
        assert store.size == 40801

    def test_ckan_matches_published_total(self):
        store = built(CKan([2, 40, 40, 40, 40, 1], degree=7))
        assert store.size == 39360

    def test_ebmlp_count_matches_enumeration(self):
        m, de, hidden, e = 6, 3, [8, 8], 4
        store = built(EbMLP(e, de, hidden, m))
        ncf = de + 1
        expected = e * ncf                     # input expansion
        expected += 8 * (e * ncf) + 8          # body L0
        expected += 8 * 8 + 8                  # body L1
        expected += m * (8 * ncf)              # readout coefficients
        assert store.size == expected

    def test_kkan_outer_coefficient_block(self):
        m, D, O = 5, 4, 3
        k = KKan(2, m, 1, [4], OuterBasis("chebyshev", D), out_dim=O)
        store = built(k)
        assert store.view("kkan.outer.C").shape == (O, m, D + 1)


class TestInitialization:
    def test_glorot_bounds_and_zero_bias(self):
        store = built(MLP(2, [50, 50], 1, init="glorot"))
        w = store.view("mlp.body.L0.w")
        bound = np.sqrt(6.0 / (2 + 50))
        assert np.max(np.abs(w)) <= bound
        assert np.max(np.abs(w)) > 0.8 * bound
        np.testing.assert_array_equal(store.view("mlp.body.L0.b"), 0.0)

    def test_lecun_uniform_bounds(self):
        store = built(MLP(3, [40], 1, init="lecun-uniform"))
        w = store.view("mlp.body.L0.w")
        assert np.max(np.abs(w)) <= np.sqrt(3.0 / 3)

    def test_zero_params_give_zero_output(self):
        m = MLP(1, [1], 1)
        store = built(m)
        store.values[:] = 0.0
        out = m.predict(store, np.array([[0.7], [-2.0]]))
        np.testing.assert_array_equal(out, 0.0)

    def test_deterministic_for_fixed_seed(self):
        k = KKan(2, 4, 2, [8], OuterBasis("sin", 3))
        s1, s2 = built(k, seed=5), built(KKan(2, 4, 2, [8], OuterBasis("sin", 3)), seed=5)
        np.testing.assert_array_equal(s1.values, s2.values)


class TestEmbeddings:
    def test_widths(self):
        assert Embedding("identity").width == 1
        assert Embedding("fourier", 10).width == 20
        assert Embedding("odd-cheb", 4).width == 4
        assert Embedding("cheb-input", 5).width == 6

    @pytest.mark.parametrize("emb", [Embedding("fourier", 7), Embedding("odd-cheb", 5)])
    def test_period_two_exact(self, emb):
        x = child_rng(30, "emb").uniform(-1, 1, size=(40, 1))
        np.testing.assert_allclose(embed(emb, x), embed(emb, x + 2.0), atol=1e-12)

    def test_odd_cheb_is_odd_sine_harmonics(self):
        x = np.linspace(-1, 1, 21).reshape(-1, 1)
        e = embed(Embedding("odd-cheb", 3), x)
        # T_{2j+1}(sin t) = (-1)^j sin((2j+1)t)
        np.testing.assert_allclose(e[:, 0], np.sin(np.pi * x[:, 0]), atol=1e-12)
        np.testing.assert_allclose(e[:, 1], -np.sin(3 * np.pi * x[:, 0]), atol=1e-12)
        np.testing.assert_allclose(e[:, 2], np.sin(5 * np.pi * x[:, 0]), atol=1e-12)

    def test_model_output_periodic_in_x(self):
        embs = [Embedding("identity"), Embedding("fourier", 10)]
        k = KKan(2, 4, 2, [8, 8], OuterBasis("rbf", 4), embeddings=embs)
        store = built(k, seed=9)
        X = child_rng(31, "emb").uniform(0, 1, size=(25, 2))
        Xs = X.copy()
        Xs[:, 1] += 2.0
        np.testing.assert_allclose(k.predict(store, X), k.predict(store, Xs),
                                   atol=1e-12)


class TestWeightNormalization:
    def test_effective_rows_have_length_g(self):
        m = MLP(2, [16, 16], 1, body="gated")
        store = built(m, seed=3)
        # simulate an optimizer step, then re-check the factorization
        store.values += 0.01 * child_rng(32, "wn").normal(size=store.size)
        for name in ("mlp.body.U", "mlp.body.L1", "mlp.out"):
            v = store.view(f"{name}.v")
            g = store.view(f"{name}.g")
            W = v * (g / np.linalg.norm(v, axis=1))[:, None]
            np.testing.assert_allclose(np.linalg.norm(W, axis=1), np.abs(g),
                                       rtol=1e-12)

    def test_initial_effective_weights_equal_their_draw(self):
        m = MLP(2, [8], 1, body="gated")
        store = built(m, seed=4)
        v = store.view("mlp.body.L0.v")
        g = store.view("mlp.body.L0.g")
        W = v * (g / np.linalg.norm(v, axis=1))[:, None]
        np.testing.assert_allclose(W, v, rtol=1e-14)


class TestGatedBody:
    def test_identical_encoders_bypass_the_body(self):
        m = MLP(1, [12, 12, 12], 1, body="gated")
        store = built(m, seed=6)
        for part in ("v", "g", "b"):
            store.view(f"mlp.body.V.{part}")[:] = store.view(f"mlp.body.U.{part}")
        X = np.linspace(-1, 1, 15).reshape(-1, 1)
        base = m.predict(store, X)
        rng = child_rng(33, "gated")
        for l in range(3):
            store.view(f"mlp.body.L{l}.v")[:] = rng.normal(size=(12, 12 if l else 1))
            store.view(f"mlp.body.L{l}.g")[:] = rng.normal(size=12) ** 2 + 0.5
        np.testing.assert_allclose(m.predict(store, X), base, atol=1e-12)

        v, g, b = (store.view(f"mlp.body.U.{s}") for s in ("v", "g", "b"))
        U = np.tanh(X @ (v * (g / np.linalg.norm(v, axis=1))[:, None]).T + b)
        vo, go, bo = (store.view(f"mlp.out.{s}") for s in ("v", "g", "b"))
        Wo = vo * (go / np.linalg.norm(vo, axis=1))[:, None]
        np.testing.assert_allclose(base, U @ Wo.T + bo, atol=1e-12)

    def test_zero_body_weights_leave_encoder_state(self):
        m = MLP(1, [6, 6], 1, body="gated")
        store = built(m, seed=7)
        for l in range(2):
            store.view(f"mlp.body.L{l}.v")[:] = 0.0
            store.view(f"mlp.body.L{l}.g")[:] = 0.0
            store.view(f"mlp.body.L{l}.b")[:] = 0.0
        # a = tanh(0) = 0 each layer, so the mix is 1*U + 0*V = U
        X = np.array([[0.4], [-0.9]])
        v, g, b = (store.view(f"mlp.body.U.{s}") for s in ("v", "g", "b"))
        U = np.tanh(X @ (v * (g / np.linalg.norm(v, axis=1))[:, None]).T + b)
        vo, go, bo = (store.view(f"mlp.out.{s}") for s in ("v", "g", "b"))
        Wo = vo * (go / np.linalg.norm(vo, axis=1))[:, None]
        np.testing.assert_allclose(m.predict(store, X), U @ Wo.T + bo, atol=1e-13)


class TestAdaptiveResidualBody:
    def test_alpha_zero_reduces_to_activation_chain(self):
        m = MLP(1, [10], 1, body="adres")
        store = built(m, seed=8)
        X = np.linspace(-2, 2, 9).reshape(-1, 1)
        vi, gi, bi = (store.view(f"mlp.body.in.{s}") for s in ("v", "g", "b"))
        Wi = vi * (gi / np.linalg.norm(vi, axis=1))[:, None]
        h = np.tanh(np.tanh(X @ Wi.T + bi))
        vo, go, bo = (store.view(f"mlp.out.{s}") for s in ("v", "g", "b"))
        Wo = vo * (go / np.linalg.norm(vo, axis=1))[:, None]
        np.testing.assert_allclose(m.predict(store, X), h @ Wo.T + bo, atol=1e-13)

    def test_alpha_one_keeps_only_transformed_path(self):
        m = MLP(1, [5], 1, body="adres")
        store = built(m, seed=9)
        store.view("mlp.body.B0.alpha")[:] = 1.0
        X = np.array([[0.3]])

        def eff(name):
            v, g = store.view(f"{name}.v"), store.view(f"{name}.g")
            return v * (g / np.linalg.norm(v, axis=1))[:, None]

        h = np.tanh(X @ eff("mlp.body.in").T + store.view("mlp.body.in.b"))
        f = np.tanh(h @ eff("mlp.body.B0.f").T + store.view("mlp.body.B0.f.b"))
        g2 = f @ eff("mlp.body.B0.g").T + store.view("mlp.body.B0.g.b")
        out = np.tanh(g2) @ eff("mlp.out").T + store.view("mlp.out.b")
        np.testing.assert_allclose(m.predict(store, X), out, atol=1e-13)

    def test_alpha_gradient_against_fd(self):
        m = MLP(1, [6, 6], 1, body="adres")
        store = built(m, seed=10)
        X = child_rng(34, "adres").uniform(-1, 1, size=(12, 1))
        y = np.sin(2 * X)
        alphas = [i for name in ("mlp.body.B0.alpha", "mlp.body.B1.alpha")
                  for i in range(*store.slice_of(name).indices(store.size))]
        assert fd_check(loss_builder(m, X, y), store, coords=alphas) < 1e-6


class TestCKan:
    def test_one_hot_first_degree_is_tanh(self):
        c = CKan([1, 1], degree=3)
        store = built(c)
        C = store.view("ckan.L0.C")
        C[:] = 0.0
        C[0, 1] = 1.0
        X = np.linspace(-2, 2, 11).reshape(-1, 1)
        np.testing.assert_allclose(c.predict(store, X), np.tanh(X), atol=1e-14)

    def test_zero_coefficients_give_zero(self):
        c = CKan([2, 5, 1], degree=4)
        store = built(c)
        store.values[:] = 0.0
        out = c.predict(store, np.random.default_rng(0).normal(size=(7, 2)))
        np.testing.assert_array_equal(out, 0.0)

    def test_small_net_matches_straight_line_reevaluation(self):
        c = CKan([1, 2, 1], degree=3)
        store = built(c, seed=11)
        X = np.linspace(-1.5, 1.5, 13).reshape(-1, 1)
        out = c.predict(store, X)

        def edge_feats(x):
            t = np.tanh(x)
            return np.stack([np.ones_like(t), t, 2 * t**2 - 1, 4 * t**3 - 3 * t], axis=-1)

        C0 = store.view("ckan.L0.C").reshape(2, 1, 4)
        C1 = store.view("ckan.L1.C").reshape(1, 2, 4)
        h = np.einsum("oin,bin->bo", C0, edge_feats(X[:, :1])[:, None, :].reshape(-1, 1, 4))
        y = np.einsum("oin,bin->bo", C1, edge_feats(h))
        np.testing.assert_allclose(out, y, atol=1e-14)


class TestKKan:
    def test_hand_built_two_branch_evaluation(self):
        k = KKan(2, 1, 1, [1], OuterBasis("rbf", 1, sigma=1.0))
        store = built(k, seed=12)
        store.view("kkan.br0.inC")[:] = [[0.5, 2.0]]
        store.view("kkan.br0.body.L0.w")[:] = [[0.3, -0.7]]
        store.view("kkan.br0.body.L0.b")[:] = [0.1]
        store.view("kkan.br0.outC")[:] = [[1.5, -2.0]]
        store.view("kkan.br1.inC")[:] = [[1.0, -1.0]]
        store.view("kkan.br1.body.L0.w")[:] = [[0.2, 0.4]]
        store.view("kkan.br1.body.L0.b")[:] = [-0.3]
        store.view("kkan.br1.outC")[:] = [[0.5, 1.0]]
        store.view("kkan.outer.C")[:] = 2.0
        store.view("kkan.outer.centers")[:] = 0.25

        x1, x2 = 0.3, -0.6
        h1 = np.tanh(0.3 * (0.5 * 1) + (-0.7) * (2.0 * x1) + 0.1)
        b1 = 1.5 - 2.0 * np.tanh(h1)
        h2 = np.tanh(0.2 * (1.0 * 1) + 0.4 * (-1.0 * x2) - 0.3)
        b2 = 0.5 + 1.0 * np.tanh(h2)
        xi = b1 + b2
        expected = 2.0 * np.exp(-((xi - 0.25) ** 2) / 2.0)
        out = k.predict(store, np.array([[x1, x2]]))
        assert out[0, 0] == pytest.approx(expected, abs=1e-14)

    def test_single_branch_skips_summation(self):
        k = KKan(1, 3, 1, [4], OuterBasis("chebyshev", 2))
        store = built(k, seed=13)
        X = np.linspace(-1, 1, 9).reshape(-1, 1)
        assert k.predict(store, X).shape == (9, 1)

    def test_zero_outer_coefficients_zero_output(self):
        k = KKan(2, 3, 2, [6], OuterBasis("legendre", 3))
        store = built(k, seed=14)
        store.view("kkan.outer.C")[:] = 0.0
        out = k.predict(store, child_rng(35, "kkan").normal(size=(11, 2)))
        np.testing.assert_array_equal(out, 0.0)

    def test_inner_segment_listing(self):
        k = KKan(2, 3, 1, [4], OuterBasis("chebyshev", 2))
        store = built(k, seed=15)
        inner = set(k.inner_segments(store))
        assert "kkan.br0.inC" in inner and "kkan.br1.outC" in inner
        assert "kkan.outer.C" not in inner
        assert inner | {s for s in store.segments if s.startswith("kkan.outer")} \
            == set(store.segments)


class TestGroupedKKan:
    def test_matches_per_branch_loop_model(self):
        d, m, de, hidden = 4, 3, 2, [5, 5]
        grouped = GroupedKKan(d, m, de, hidden, OuterBasis("chebyshev", 3))
        gs = built(grouped, seed=16)
        loop = KKan(d, m, de, hidden, OuterBasis("chebyshev", 3), name="kkan")
        ls = built(loop, seed=16)
        for i in range(d):
            ls.view(f"kkan.br{i}.inC")[:] = gs.view("kkan.in.C")[i]
            for l in range(len(hidden)):
                ls.view(f"kkan.br{i}.body.L{l}.w")[:] = gs.view(f"kkan.L{l}.w")[i]
                ls.view(f"kkan.br{i}.body.L{l}.b")[:] = gs.view(f"kkan.L{l}.b")[i]
            ls.view(f"kkan.br{i}.outC")[:] = gs.view("kkan.out.C")[i]
        ls.view("kkan.outer.C")[:] = gs.view("kkan.outer.C")
        X = child_rng(36, "grouped").uniform(-1, 1, size=(14, d))
        np.testing.assert_allclose(grouped.predict(gs, X), loop.predict(ls, X),
                                   atol=1e-12)

    def test_gradients_against_fd(self):
        g = GroupedKKan(5, 2, 1, [3], OuterBasis("chebyshev", 2))
        store = built(g, seed=17)
        rng = child_rng(37, "grouped")
        X = rng.uniform(-1, 1, size=(6, 5))
        y = rng.normal(size=(6, 1))
        assert fd_check(loss_builder(g, X, y), store) < 1e-6


class TestGradients:
    @pytest.mark.parametrize("make", [
        lambda: MLP(2, [7, 7], 1),
        lambda: MLP(2, [6, 6], 1, body="gated"),
        lambda: MLP(2, [6, 6], 1, body="adres"),
        lambda: CKan([2, 5, 1], degree=4),
        lambda: KKan(2, 3, 2, [5], OuterBasis("chebyshev", 3)),
        lambda: KKan(2, 3, 1, [4], OuterBasis("rbf", 3),
                     embeddings=[Embedding("identity"), Embedding("fourier", 2)]),
    ])
    def test_loss_gradient_against_fd(self, make):
        model = make()
        store = built(model, seed=18)
        rng = child_rng(38, "models", "fd")
        X = rng.uniform(-1, 1, size=(9, 2))
        y = rng.normal(size=(9, 1))
        assert fd_check(loss_builder(model, X, y), store) < 1e-6

    def test_second_derivative_jets_through_kkan(self):
        embs = [Embedding("identity"), Embedding("fourier", 3)]
        k = KKan(2, 3, 2, [6], OuterBasis("rbf", 3), embeddings=embs)
        store = built(k, seed=19)
        t = np.full((7, 1), 0.4)
        x = np.linspace(-0.9, 0.9, 7).reshape(-1, 1)
        p = {name: store.view(name) for name in store.segments}
        tp = Tape()
        xj = Jet2.seed(tp.const(x))
        u = k.forward(tp.params(store), [tp.const(t), xj])
        h = 1e-4
        up = k.forward(p, [t, x + h])
        um = k.forward(p, [t, x - h])
        u0 = k.forward(p, [t, x])
        fd2 = (up - 2 * u0 + um) / h**2
        np.testing.assert_allclose(u.d2.val, fd2, rtol=1e-4, atol=1e-5)
