import numpy as np
import pytest

from conftest import random_instance
from congrec import kernels
from congrec._accel import HAVE_NUMBA
from congrec.data import SocialGraph, SparseRatings, UserPairMatrix
from congrec.errors import ConfigurationError, DivergenceError, ValidationError
from congrec.factorization import (
    CR,
    CSRR,
    MF,
    OUTGOING,
    SMF,
    SOREG,
    ClosenessSpec,
    FactorModel,
    TrainConfig,
    build_closeness,
    gradient,
    load_model,
    objective,
    predict,
    save_model,
    train,
    write_trace,
)
from congrec.synth import low_rank_ratings

BACKENDS = ["numpy"] + (["numba"] if HAVE_NUMBA else [])


def fd_gradient(U, V, R, L, lam, gamma, h=1e-6, backend=None):
    """Central finite differences of the objective, the independent oracle."""
    out = []
    for X in (U, V):
        G = np.zeros_like(X)
        for idx in np.ndindex(X.shape):
            old = X[idx]
            X[idx] = old + h
            fp = objective((U, V), R, L, lam, gamma, backend=backend)
            X[idx] = old - h
            fm = objective((U, V), R, L, lam, gamma, backend=backend)
            X[idx] = old
            G[idx] = (fp - fm) / (2 * h)
        out.append(G)
    return out


def full_ratings(M):
    n, m = M.shape
    u, i = np.divmod(np.arange(n * m), m)
    return SparseRatings(n, m, u, i, M.ravel())


class TestCloseness:
    def setup_method(self):
        self.C = UserPairMatrix.symmetric(3, [0, 1], [1, 2], [0.4, -0.6])
        self.G = SocialGraph(3, [(0, 1), (0, 2)])
        self.S = UserPairMatrix.symmetric(3, [0, 0, 1], [1, 2, 2], [0.9, 0.2, 0.5])

    def test_csrr_blend(self):
        L = build_closeness(ClosenessSpec(CSRR, congruity=self.C, graph=self.G), delta=0.3)
        assert L.get(0, 1) == pytest.approx(0.3 + 0.7 * 0.7)
        assert L.get(0, 1) == pytest.approx(0.79)
        assert L.get(0, 2) == pytest.approx(0.3 + 0.7 * 0.5)
        assert L.get(1, 2) == pytest.approx(0.7 * 0.2)
        assert L.is_symmetric()

    def test_csrr_delta_one_is_graph(self):
        L = build_closeness(ClosenessSpec(CSRR, congruity=self.C, graph=self.G), delta=1.0)
        assert L == self.G.as_pairs()

    def test_cr_is_raw_c(self):
        assert build_closeness(ClosenessSpec(CR, congruity=self.C)) == self.C

    def test_clamp_nonnegative(self):
        L = build_closeness(ClosenessSpec(CR, congruity=self.C), clamp_nonnegative=True)
        assert (L.vals > 0).all() and L.nnz == 2

    def test_soreg_restricts_to_friends(self):
        L = build_closeness(ClosenessSpec(SOREG, similarity=self.S, graph=self.G))
        assert L.get(0, 1) == 0.9 and L.get(0, 2) == 0.2 and L.get(1, 2) == 0.0

    def test_smf(self):
        assert build_closeness(ClosenessSpec(SMF, similarity=self.S)) == self.S

    def test_mf_empty(self):
        assert build_closeness(ClosenessSpec(MF)).nnz == 0

    def test_missing_input(self):
        with pytest.raises(ConfigurationError):
            ClosenessSpec(CR)
        with pytest.raises(ConfigurationError):
            ClosenessSpec("pmf")


@pytest.mark.parametrize("backend", BACKENDS)
class TestObjective:
    def test_zero_model_single_rating(self, backend):
        R = SparseRatings(1, 1, [0], [0], [4])
        assert objective((np.zeros((1, 2)), np.zeros((1, 2))), R, None, 0.5, 1.0, backend=backend) == 16.0

    def test_perfect_reconstruction(self, backend):
        M, U, V = low_rank_ratings(6, 5, 2, seed=1)
        assert objective((U, V), full_ratings(M), None, 0.0, 0.0, backend=backend) == pytest.approx(0, abs=1e-20)

    def test_closeness_both_orientations(self, backend):
        R = SparseRatings(2, 1, [], [], [])
        L = UserPairMatrix.symmetric(2, [0], [1], [0.5])
        U = np.array([[1.0], [3.0]])
        assert objective((U, np.zeros((1, 1))), R, L, 0.0, 2.0, backend=backend) == pytest.approx(8.0)

    def test_closeness_attraction(self, backend, rng):
        R = SparseRatings(3, 1, [], [], [])
        U = rng.normal(size=(3, 2))
        V = np.zeros((1, 2))
        vals = [objective((U, V), R, UserPairMatrix.symmetric(3, [0], [2], [w]), 0.0, 1.0, backend=backend)
                for w in (0.1, 0.2, 0.5)]
        assert vals[0] < vals[1] < vals[2]


@pytest.mark.parametrize("backend", BACKENDS)
class TestGradient:
    def test_zero_model(self, backend, rng):
        R, L, _, _ = random_instance(rng, 5, 4, 3)
        dU, dV = gradient((np.zeros((5, 3)), np.zeros((4, 3))), R, L, 0.1, 1.0, backend=backend)
        assert not dU.any() and not dV.any()

    def test_finite_differences(self, backend, rng):
        R, L, U, V = random_instance(rng, 8, 6, 3)
        dU, dV = gradient((U, V), R, L, 0.3, 2.0, backend=backend)
        fU, fV = fd_gradient(U, V, R, L, 0.3, 2.0, backend=backend)
        for a, f in ((2 * dU, fU), (2 * dV, fV)):
            rel = np.abs(a - f) / np.maximum(np.abs(f), 1.0)
            assert rel.max() <= 1e-5

    def test_gamma_zero_is_mf(self, backend, rng):
        R, L, U, V = random_instance(rng, 6, 5, 2)
        a = gradient((U, V), R, L, 0.1, 0.0, backend=backend)
        b = gradient((U, V), R, None, 0.1, 0.0, backend=backend)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_outgoing_mode_halves_symmetric_closeness(self, backend, rng):
        R, L, U, V = random_instance(rng, 6, 5, 2)
        base = gradient((U, V), R, None, 0.1, 0.0, backend=backend)[0]
        full = gradient((U, V), R, L, 0.1, 1.0, backend=backend)[0] - base
        outgoing = gradient((U, V), R, L, 0.1, 1.0, mode=OUTGOING, backend=backend)[0] - base
        assert np.allclose(outgoing, full / 2, atol=1e-12)

    def test_bad_mode(self, backend, rng):
        R, L, U, V = random_instance(rng, 3, 3, 2)
        with pytest.raises(ConfigurationError):
            gradient((U, V), R, L, 0.1, 1.0, mode="exact", backend=backend)


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
def test_backends_agree(rng):
    R, L, U, V = random_instance(rng, 9, 7, 4)
    args = (U, V, R.users, R.items, R.values, L.rows, L.cols, L.vals)
    t1 = kernels.objective_terms(*args, backend="numpy")
    t2 = kernels.objective_terms(*args, backend="numba")
    assert np.allclose(t1, t2, rtol=1e-12)
    for full in (True, False):
        g1 = kernels.half_gradient(*args, 0.2, 3.0, full, backend="numpy")
        g2 = kernels.half_gradient(*args, 0.2, 3.0, full, backend="numba")
        assert all(np.allclose(a, b, rtol=1e-12, atol=1e-12) for a, b in zip(g1, g2))
    r1 = kernels.residuals(U, V, R.users, R.items, R.values, backend="numpy")
    r2 = kernels.residuals(U, V, R.users, R.items, R.values, backend="numba")
    assert np.allclose(r1, r2, rtol=1e-12)


class TestPredict:
    def test_dot(self):
        m = FactorModel(np.array([[1.0, 2.0]]), np.array([[3.0, 0.5]]))
        assert predict(m, 0, 0) == 4.0

    def test_clamp(self):
        m = FactorModel(np.array([[6.2]]), np.array([[1.0]]))
        assert predict(m, 0, 0, clamp=True) == 5.0
        assert predict(m, 0, 0) == pytest.approx(6.2)

    def test_zero_model(self):
        assert predict(FactorModel(np.zeros((2, 3)), np.zeros((2, 3))), 1, 1) == 0.0

    def test_out_of_range(self):
        m = FactorModel(np.zeros((2, 3)), np.zeros((2, 3)))
        with pytest.raises(IndexError):
            predict(m, 2, 0)


class TestTrain:
    def test_low_rank_recovery(self):
        M, _, _ = low_rank_ratings(20, 15, 3, seed=0)
        R = full_ratings(M)
        cfg = TrainConfig(d=3, lam=0.0, gamma=0.0, learning_rate=1e-3, max_iters=500, tol=0.0)
        res = train(R, None, cfg)
        e = res.model.predict_many(R.users, R.items) - R.values
        assert np.sqrt(np.mean(e ** 2)) < 0.05

    def test_monotone_small_step(self, rng):
        R, L, _, _ = random_instance(rng, 10, 8, 3)
        cfg = TrainConfig(d=3, lam=0.1, gamma=0.5, learning_rate=1e-4, max_iters=300, tol=0.0)
        obj = train(R, L, cfg).objectives
        assert all(b <= a + 1e-12 for a, b in zip(obj, obj[1:]))

    def test_deterministic(self, rng):
        R, L, _, _ = random_instance(rng, 10, 8, 3)
        cfg = TrainConfig(d=3, gamma=1.0, learning_rate=1e-3, max_iters=50, seed=4)
        a, b = train(R, L, cfg), train(R, L, cfg)
        assert np.array_equal(a.model.U, b.model.U) and np.array_equal(a.model.V, b.model.V)

    def test_variant_collapse(self, rng):
        R, L, _, _ = random_instance(rng, 10, 8, 3)
        G = SocialGraph(10, [(0, 1), (2, 3)])
        cfg = TrainConfig(d=3, lam=0.1, learning_rate=1e-3, max_iters=40, tol=0.0, seed=9)
        mf = train(R, ClosenessSpec(MF), cfg)
        cr_gamma0 = train(R, ClosenessSpec(CR, congruity=L), cfg.with_(gamma=0.0))
        cr_empty = train(R, ClosenessSpec(CR, congruity=UserPairMatrix.empty(10)), cfg)
        csrr_gamma0 = train(R, ClosenessSpec(CSRR, congruity=L, graph=G), cfg.with_(gamma=0.0))
        for other in (cr_gamma0, cr_empty, csrr_gamma0):
            assert other.objectives == mf.objectives
            assert np.array_equal(other.model.U, mf.model.U)

    def test_divergence(self, rng):
        R, L, _, _ = random_instance(rng, 10, 8, 3)
        with pytest.raises(DivergenceError) as exc:
            train(R, L, TrainConfig(d=3, learning_rate=1.0, max_iters=200, gamma=10.0))
        assert exc.value.iteration >= 1
        assert "learning_rate" in str(exc.value)

    def test_user_count_mismatch(self, rng):
        R, _, _, _ = random_instance(rng, 5, 4, 2)
        with pytest.raises(ValidationError):
            train(R, UserPairMatrix.symmetric(7, [0], [6], [1.0]), TrainConfig(d=2))

    def test_trace_file(self, rng, tmp_path):
        R, L, _, _ = random_instance(rng, 5, 4, 2)
        res = train(R, L, TrainConfig(d=2, max_iters=3, tol=0.0))
        write_trace(res, tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "iter,objective,delta_rel"
        assert len(lines) == 5 and lines[1].endswith(",")


class TestConfig:
    @pytest.mark.parametrize("kw", [{"d": 0}, {"lam": -1}, {"delta": 1.5}, {"learning_rate": 0},
                                    {"gradient_mode": "x"}, {"tol": -1}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            TrainConfig(**kw)

    def test_digest(self):
        assert TrainConfig().digest() == TrainConfig().digest()
        assert TrainConfig().digest() != TrainConfig(d=4).digest()


class TestPersistence:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        m = FactorModel(rng.normal(size=(7, 3)), rng.normal(size=(5, 3)), CR, "abc")
        save_model(m, tmp_path / "m.bin")
        back = load_model(tmp_path / "m.bin")
        assert back.U.tobytes() == m.U.tobytes() and back.V.tobytes() == m.V.tobytes()
        assert (back.variant, back.config_hash) == (CR, "abc")

    def test_bad_magic(self, tmp_path):
        (tmp_path / "m.bin").write_bytes(b"nope\n")
        with pytest.raises(ValidationError):
            load_model(tmp_path / "m.bin")

    def test_truncated(self, rng, tmp_path):
        save_model(FactorModel(rng.normal(size=(2, 2)), rng.normal(size=(2, 2))), tmp_path / "m.bin")
        data = (tmp_path / "m.bin").read_bytes()
        (tmp_path / "m.bin").write_bytes(data[:-8])
        with pytest.raises(ValidationError):
            load_model(tmp_path / "m.bin")
