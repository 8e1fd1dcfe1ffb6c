# wienernet/tests/test_lds_sim.py
"""
Tests for lds_sim.py models, MA(1) noise, simulation regimes and batch files
"""
import numpy as np
import pandas as pd
import pytest

from wienernet import lds_sim
from wienernet.errors import BatchFormatError, ModelError, SupportMismatchError, UnstableModelError
from wienernet.graph import Graph, grid_graph
from wienernet.lds_sim import (
    BATCH_HEADER,
    LdsModel,
    Regime,
    TrajectoryBatch,
    burn_in_length,
    export_batch_csv,
    load_batch,
    parse_regime,
    random_model,
    sample_noise,
    save_batch,
    simulate,
    uniform_model,
)
from wienernet.spectral import analytic_autocorr


class TestRegime:
    """Tests for regime parsing"""

    @pytest.mark.parametrize("text,expected", [
        ("iid", Regime.RESTART_RECORD),
        ("restart-record", Regime.RESTART_RECORD),
        ("consecutive", Regime.CONSECUTIVE),
        ("non-iid", Regime.CONSECUTIVE),
    ])
    def test_aliases(self, text, expected):
        """Should accept CLI spellings"""
        assert parse_regime(text) is expected

    def test_unknown(self):
        """Should reject unknown regimes"""
        with pytest.raises(ValueError):
            parse_regime("streaming")

    def test_codes_roundtrip(self):
        """Should map header codes back to regimes"""
        for regime in Regime:
            assert Regime.from_code(regime.code) is regime


class TestModel:
    """Tests for LdsModel validation and generators"""

    def test_rejects_nonpositive_gain(self):
        """Should require persistent excitation"""
        with pytest.raises(ModelError):
            LdsModel(h=np.zeros((2, 2)), noise_gain=[1.0, 0.0])

    def test_rejects_non_square(self):
        """Should require a square h"""
        with pytest.raises(ModelError):
            LdsModel(h=np.zeros((2, 3)), noise_gain=[1.0, 1.0])

    def test_arrays_are_read_only(self, chain_model):
        """Should freeze h so trials can share the model"""
        with pytest.raises(ValueError):
            chain_model.h[0, 0] = 1.0

    def test_chain_radius(self, chain_model):
        """Should report rho(h) = 0.2 + sqrt(0.23)"""
        assert chain_model.spectral_radius == pytest.approx(0.2 + np.sqrt(0.23))

    def test_random_model_matches_graph(self):
        """Should put weights exactly on the edges and scale to the target radius"""
        g = grid_graph(3, 3)
        model = random_model(g, seed=4, target_radius=0.6)
        model.check_support(g)
        assert model.spectral_radius == pytest.approx(0.6)
        assert np.all(model.h >= 0)

    def test_random_model_is_asymmetric(self):
        """Should draw h_ij and h_ji independently"""
        g = grid_graph(2, 2)
        model = random_model(g, seed=1)
        assert not np.allclose(model.h, model.h.T)

    def test_uniform_model_jitter(self):
        """Should vary gains only when gain_jitter > 0"""
        g = grid_graph(2, 2)
        assert np.allclose(uniform_model(g).noise_gain, 1.0)
        jittered = uniform_model(g, gain_jitter=0.3, seed=2).noise_gain
        assert np.all((jittered >= 0.7) & (jittered <= 1.3))
        assert np.ptp(jittered) > 0

    def test_rescaled_keeps_radius(self, chain_model):
        """Should conjugate h by a diagonal scaling"""
        scaled = chain_model.rescaled([1.0, 2.0, 0.5])
        assert scaled.spectral_radius == pytest.approx(chain_model.spectral_radius)
        assert scaled.h[0, 1] == pytest.approx(0.5 * 1.0 / 2.0)
        assert scaled.noise_gain.tolist() == pytest.approx([1.0, 2.0, 0.5])

    def test_burn_in(self, chain_model, ma_model):
        """Should choose K with rho^K < 1e-8, at least one step"""
        assert burn_in_length(chain_model) == 48
        assert burn_in_length(ma_model) == 1


class TestNoise:
    """Tests for MA(1) excitation"""

    def test_ma_autocovariance(self, ma_model):
        """Should give lag-0 1.09, lag-1 -0.3 and lag-2 0"""
        e = sample_noise(ma_model, 200_000, np.random.default_rng(0))[:, 0]
        assert np.mean(e * e) == pytest.approx(1.09, abs=0.02)
        assert np.mean(e[1:] * e[:-1]) == pytest.approx(-0.3, abs=0.02)
        assert np.mean(e[2:] * e[:-2]) == pytest.approx(0.0, abs=0.02)

    def test_white_when_theta1_zero(self, empty3):
        """Should produce white noise for theta1 = 0"""
        model = LdsModel(h=np.zeros((3, 3)), noise_gain=np.ones(3), ma_coeffs=(1.0, 0.0))
        e = sample_noise(model, 100_000, np.random.default_rng(1))[:, 1]
        assert np.mean(e[1:] * e[:-1]) == pytest.approx(0.0, abs=0.02)

    def test_nodes_independent(self, ma_model):
        """Should draw uncorrelated noise across nodes"""
        e = sample_noise(ma_model, 100_000, np.random.default_rng(2))
        assert np.mean(e[:, 0] * e[:, 1]) == pytest.approx(0.0, abs=0.03)

    def test_rejects_empty(self, ma_model):
        """Should require length >= 1"""
        with pytest.raises(ValueError):
            sample_noise(ma_model, 0, np.random.default_rng(0))


class TestSimulate:
    """Tests for the two recording regimes"""

    def test_shape_and_metadata(self, chain_model, chain):
        """Should return n x N x (p+1) with the burn-in recorded"""
        batch = simulate(chain_model, chain, "iid", n=5, N=16, seed=1)
        assert batch.data.shape == (5, 16, 3)
        assert batch.regime is Regime.RESTART_RECORD
        assert batch.burn_in == 48

    @pytest.mark.parametrize("regime", ["iid", "consecutive"])
    def test_bit_identical(self, chain_model, chain, regime):
        """Should reproduce identical data for identical inputs"""
        a = simulate(chain_model, chain, regime, n=4, N=32, seed=9)
        b = simulate(chain_model, chain, regime, n=4, N=32, seed=9)
        assert np.array_equal(a.data, b.data)

    def test_seed_changes_data(self, chain_model, chain):
        """Should give different data for a different seed"""
        a = simulate(chain_model, chain, "iid", n=2, N=8, seed=1)
        b = simulate(chain_model, chain, "iid", n=2, N=8, seed=2)
        assert not np.array_equal(a.data, b.data)

    def test_restart_prefix_stable(self, chain_model, chain):
        """Should give trajectory r the same data whatever n is"""
        small = simulate(chain_model, chain, "iid", n=3, N=10, seed=5)
        large = simulate(chain_model, chain, "iid", n=6, N=10, seed=5)
        assert np.allclose(small.data, large.data[:3], rtol=0, atol=1e-12)

    def test_workers_do_not_change_data(self, chain_model, chain, monkeypatch):
        """Should produce the same batch for any worker count"""
        monkeypatch.setattr(lds_sim, "RESTART_BLOCK", 3)
        serial = simulate(chain_model, chain, "iid", n=10, N=8, seed=3, workers=1)
        parallel = simulate(chain_model, chain, "iid", n=10, N=8, seed=3, workers=4)
        assert np.array_equal(serial.data, parallel.data)

    def test_consecutive_is_one_run(self, chain_model, chain):
        """Should slice one contiguous run into n trajectories"""
        split = simulate(chain_model, chain, "consecutive", n=4, N=5, seed=7)
        whole = simulate(chain_model, chain, "consecutive", n=1, N=20, seed=7)
        assert np.array_equal(split.data.reshape(-1, 3), whole.data.reshape(-1, 3))

    def test_consecutive_chunks_continue_state(self, chain_model, chain, monkeypatch):
        """Should give the same run for any internal chunk size"""
        reference = simulate(chain_model, chain, "consecutive", n=3, N=50, seed=2)
        monkeypatch.setattr(lds_sim, "CONSECUTIVE_CHUNK", 17)
        chunked = simulate(chain_model, chain, "consecutive", n=3, N=50, seed=2)
        assert np.allclose(reference.data, chunked.data, rtol=0, atol=1e-12)

    def test_consecutive_lag_one_covariance(self, chain_model, chain):
        """Should match the analytic R_x(1) over a long run"""
        batch = simulate(chain_model, chain, "consecutive", n=1, N=300_000, seed=11)
        x = batch.data[0]
        empirical = x[1:].T @ x[:-1] / (x.shape[0] - 1)
        seq = analytic_autocorr(chain_model, tau_max=2)
        tol = 10 * np.linalg.norm(seq.lag(0), 2) / np.sqrt(x.shape[0])
        assert np.linalg.norm(empirical - seq.lag(1), 2) <= tol

    def test_restart_trajectories_independent(self):
        """Should give uncorrelated trajectories in restart_record"""
        model = LdsModel(h=np.zeros((1, 1)), noise_gain=[1.0], ma_coeffs=(1.0, 0.0))
        batch = simulate(model, Graph(node_count=1), "iid", n=2, N=40_000, seed=0)
        a, b = batch.data[0, :, 0], batch.data[1, :, 0]
        assert abs(np.mean(a * b)) <= 4 / np.sqrt(40_000)

    def test_rejects_unstable(self, chain):
        """Should reject rho(h) >= 1 - 1e-6"""
        h = np.array([[0.6, 0.5, 0.0], [0.5, 0.6, 0.5], [0.0, 0.5, 0.6]])
        model = LdsModel(h=h, noise_gain=np.ones(3))
        with pytest.raises(UnstableModelError):
            simulate(model, chain, "iid", n=1, N=4, seed=0)

    def test_rejects_support_mismatch(self, chain_model, empty3):
        """Should reject h whose support differs from the graph"""
        with pytest.raises(SupportMismatchError):
            simulate(chain_model, empty3, "iid", n=1, N=4, seed=0)

    def test_rejects_empty_batch(self, chain_model, chain):
        """Should require n, N >= 1"""
        with pytest.raises(ValueError):
            simulate(chain_model, chain, "iid", n=0, N=4, seed=0)


class TestBatchFiles:
    """Tests for the WTB1 batch format"""

    def test_roundtrip(self, chain_model, chain, tmp_path):
        """Should restore data, regime, seed and burn-in exactly"""
        batch = simulate(chain_model, chain, "consecutive", n=3, N=7, seed=123)
        path = tmp_path / "batch.wtb"
        save_batch(batch, path)
        loaded = load_batch(path)
        assert np.array_equal(loaded.data, batch.data)
        assert loaded.regime is Regime.CONSECUTIVE
        assert loaded.seed == 123
        assert loaded.burn_in == batch.burn_in

    def test_truncated(self, chain_model, chain, tmp_path):
        """Should reject a file cut inside the payload"""
        path = tmp_path / "batch.wtb"
        save_batch(simulate(chain_model, chain, "iid", n=2, N=4, seed=0), path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(BatchFormatError):
            load_batch(path)

    def test_short_header(self, tmp_path):
        """Should reject a file shorter than the header"""
        path = tmp_path / "batch.wtb"
        path.write_bytes(b"WTB1")
        with pytest.raises(BatchFormatError):
            load_batch(path)

    def test_bad_magic(self, tmp_path):
        """Should reject foreign files"""
        path = tmp_path / "batch.wtb"
        path.write_bytes(BATCH_HEADER.pack(b"NOPE", 0, 1, 1, 1, 0, 1) + b"\x00" * 8)
        with pytest.raises(BatchFormatError):
            load_batch(path)

    def test_unknown_regime(self, tmp_path):
        """Should reject an unknown regime tag"""
        path = tmp_path / "batch.wtb"
        path.write_bytes(BATCH_HEADER.pack(b"WTB1", 7, 1, 1, 1, 0, 1) + b"\x00" * 8)
        with pytest.raises(BatchFormatError):
            load_batch(path)

    def test_csv_export(self, tmp_path):
        """Should write long-format rows with 1-based labels"""
        batch = TrajectoryBatch(regime="iid", data=np.arange(12.0).reshape(2, 3, 2), seed=0, burn_in=1)
        path = tmp_path / "batch.csv"
        export_batch_csv(batch, path)
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["trajectory", "k", "x_1", "x_2"]
        assert frame["trajectory"].tolist() == [1, 1, 1, 2, 2, 2]
        assert frame.loc[4, "x_2"] == 9.0
