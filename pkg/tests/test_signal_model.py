import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from isac_slp.signal_model import (
    DimensionError,
    SystemConfig,
    attenuation,
    c0_linear,
    comm_rx,
    dbm_to_watts,
    delay_shift_matrix,
    dft_matrix,
    extended_steering,
    normalized_delay,
    path_loss_db,
    psk_alphabet,
    sample_channels,
    sample_si_channel,
    sample_symbols,
    steering_vector,
    synthesize_radar_rx,
)


def small_config(**kw):
    base = dict(M=4, K=2, N=8)
    base.update(kw)
    return SystemConfig(**base)


class TestConfig:
    def test_reference_defaults(self):
        cfg = SystemConfig()
        assert (cfg.M, cfg.K, cfg.N) == (32, 8, 256)
        assert cfg.T_s == pytest.approx(1 / (256 * 120e3))
        assert len(cfg.gamma) == 8

    def test_unit_conversions(self):
        assert dbm_to_watts(30) == pytest.approx(1.0)
        assert dbm_to_watts(-90) == pytest.approx(1e-12)
        assert dbm_to_watts(-80) == pytest.approx(1e-11)

    @pytest.mark.parametrize("kw", [
        dict(K=5, M=4), dict(N=12), dict(P_T=0.0), dict(sigma_s2=-1.0),
        dict(phi=0.0), dict(phi=math.pi / 2), dict(gamma=(1.0, 2.0, 3.0)),
        dict(c0_convention="log"), dict(channel_model="rician"),
    ])
    def test_invariants(self, kw):
        with pytest.raises(ValueError):
            small_config(**kw)

    def test_gamma_broadcast(self):
        assert small_config(gamma=(10.0,)).gamma == (10.0, 10.0)
        assert small_config(gamma=(3.0, 4.0)).Gamma == pytest.approx(np.sqrt([3e-12, 4e-12]))


class TestSteering:
    def test_broadside(self):
        np.testing.assert_array_equal(steering_vector(0.0, 4), np.ones(4))

    def test_thirty_degrees(self):
        np.testing.assert_allclose(steering_vector(math.radians(30), 2), [1, -1j], atol=1e-15)

    def test_first_element_exact(self):
        assert steering_vector(0.7, 9)[0] == 1.0

    def test_norm_on_degree_grid(self):
        for deg in range(-89, 90):
            a = steering_vector(math.radians(deg), 16)
            assert np.sum(np.abs(a) ** 2) == pytest.approx(16, rel=1e-14)

    def test_vectorised(self):
        th = np.array([0.1, -0.4, 1.0])
        A = steering_vector(th, 5)
        for i, t in enumerate(th):
            np.testing.assert_allclose(A[i], steering_vector(t, 5))

    def test_domain(self):
        with pytest.raises(ValueError):
            steering_vector(math.pi / 2, 4)

    def test_extended(self):
        np.testing.assert_array_equal(extended_steering(0.0, 2), np.ones(4))
        np.testing.assert_allclose(extended_steering(math.radians(30), 2),
                                   [1, -1j, -1j, -1], atol=1e-15)
        assert np.sum(np.abs(extended_steering(0.3, 5)) ** 2) == pytest.approx(25)


class TestOperators:
    def test_dft_small(self):
        np.testing.assert_array_equal(dft_matrix(1), [[1.0]])
        np.testing.assert_allclose(dft_matrix(2), np.array([[1, 1], [1, -1]]) / math.sqrt(2),
                                   atol=1e-16)

    def test_dft_is_conjugate_fft(self):
        N = 16
        F = dft_matrix(N)
        np.testing.assert_allclose(F, np.conj(np.fft.fft(np.eye(N))) / math.sqrt(N), atol=1e-14)

    @pytest.mark.parametrize("N", [2**k for k in range(10)])
    def test_dft_unitary(self, N):
        F = dft_matrix(N)
        assert np.max(np.abs(F @ F.conj().T - np.eye(N))) <= 1e-12

    def test_shift_definition(self):
        np.testing.assert_array_equal(delay_shift_matrix(5, 0), np.eye(5))
        S = delay_shift_matrix(3, 1)
        ref = np.zeros((3, 3))
        ref[1, 0] = ref[2, 1] = 1.0
        np.testing.assert_array_equal(S, ref)

    @given(st.integers(1, 32), st.data())
    def test_shift_gram(self, N, data):
        n_t = data.draw(st.integers(0, N - 1))
        S = delay_shift_matrix(N, n_t)
        G = S.T @ S
        assert np.array_equal(G, np.diag(np.diag(G)))
        assert np.sum(G) == N - n_t

    def test_shift_delays_columns_vectors(self, rng):
        # I_nt v delays a length-N sequence by n_t samples with zero fill
        v = rng.standard_normal(8)
        np.testing.assert_array_equal(delay_shift_matrix(8, 3) @ v, np.r_[np.zeros(3), v[:5]])

    def test_right_multiplication_shifts_rows(self, rng):
        # A I_nt moves column j + n_t of A to column j and zero-fills the tail,
        # i.e. each row sequence of X F is read n_t samples ahead
        for N in (4, 8, 16):
            X = rng.standard_normal((3, N)) + 1j * rng.standard_normal((3, N))
            XF = X @ dft_matrix(N)
            for n_t in range(N):
                ref = np.zeros_like(XF)
                ref[:, :N - n_t] = XF[:, n_t:]
                np.testing.assert_allclose(XF @ delay_shift_matrix(N, n_t), ref, atol=1e-15)

    def test_shift_domain(self):
        with pytest.raises(ValueError):
            delay_shift_matrix(4, 4)


class TestGeometry:
    def test_delay_values(self):
        cfg = SystemConfig()
        assert normalized_delay(0.0, cfg) == 0
        assert normalized_delay(1000.0, cfg) == 204
        assert normalized_delay(10.0, cfg) == 2

    def test_delay_out_of_window(self):
        with pytest.raises(ValueError, match="2000"):
            normalized_delay(2000.0, SystemConfig())

    def test_attenuation(self):
        cfg = SystemConfig()
        assert attenuation(1.0, cfg) == pytest.approx(c0_linear(cfg) ** 2)
        assert abs(attenuation(1000.0, cfg)) == pytest.approx(1e-10, rel=1e-12)
        for d in (3.0, 70.0, 900.0):
            assert abs(attenuation(2 * d, cfg)) / abs(attenuation(d, cfg)) == pytest.approx(2 ** -4)

    def test_attenuation_conventions(self):
        cfg = SystemConfig(c0_convention="power")
        assert c0_linear(cfg) == pytest.approx(100.0)
        assert c0_linear(SystemConfig()) == pytest.approx(10.0)

    def test_attenuation_phase(self, rng):
        cfg = SystemConfig(beta_random_phase=True)
        b = attenuation(100.0, cfg, rng)
        assert abs(b) == pytest.approx(abs(attenuation(100.0, SystemConfig())))
        with pytest.raises(ValueError):
            attenuation(100.0, cfg)
        with pytest.raises(ValueError):
            attenuation(0.5, SystemConfig())


class TestSamplers:
    def test_si_zero(self, rng):
        assert not np.any(sample_channels(small_config(sigma_si2=0.0), rng).H_SI)

    def test_si_moment(self, rng):
        H = sample_si_channel(4, 3e-11, rng, size=6250)  # 10^5 entries
        assert np.mean(np.abs(H) ** 2) == pytest.approx(3e-11, rel=0.02)

    def test_channel_power_at_100m(self, rng):
        cfg = SystemConfig(M=8, K=1, N=16384)
        H = sample_channels(cfg, rng, distances=[100.0]).H
        ref = 10 ** (-(140.7 + 36.7 * math.log10(0.1)) / 10)
        assert np.mean(np.abs(H) ** 2) == pytest.approx(ref, rel=0.03)
        assert path_loss_db(100.0) == pytest.approx(140.7 - 36.7)

    def test_tdl_power(self, rng):
        cfg = SystemConfig(M=8, K=1, N=4096, channel_model="tdl")
        pw = np.mean([np.mean(np.abs(sample_channels(cfg, rng, distances=[100.0]).H) ** 2)
                      for _ in range(50)])
        assert pw == pytest.approx(10 ** (-(140.7 - 36.7) / 10), rel=0.1)

    def test_user_positions_area_uniform(self, rng):
        cfg = SystemConfig(M=4, K=4, N=2, user_radius=50.0)
        d = np.concatenate([sample_channels(cfg, rng).user_distances for _ in range(5000)])
        assert d.max() <= 50.0
        # P(r <= R/2) = 1/4 on a disc
        assert np.mean(d <= 25.0) == pytest.approx(0.25, abs=0.015)

    def test_shapes(self, rng):
        ch = sample_channels(small_config(), rng)
        assert ch.H.shape == (8, 2, 4) and ch.H_SI.shape == (4, 4)

    def test_symbols(self, rng):
        cfg = SystemConfig(M=4, K=4, N=32768)
        s = sample_symbols(cfg, rng).s
        np.testing.assert_allclose(np.abs(s), 1.0, rtol=1e-15)
        alphabet = psk_alphabet(4)
        np.testing.assert_allclose(alphabet, np.exp(1j * np.pi * np.array([1, 3, 5, 7]) / 4))
        counts = [np.mean(np.isclose(s, p)) for p in alphabet]
        np.testing.assert_allclose(counts, 0.25, rtol=0.02)

    def test_seed_determinism(self):
        cfg = small_config()
        a = sample_channels(cfg, np.random.default_rng(5))
        b = sample_channels(cfg, np.random.default_rng(5))
        np.testing.assert_array_equal(a.H, b.H)
        np.testing.assert_array_equal(sample_symbols(cfg, np.random.default_rng(1)).s,
                                      sample_symbols(cfg, np.random.default_rng(1)).s)


class TestRadarRx:
    def test_all_zero(self, rng):
        X = rng.standard_normal((4, 8))
        Y = synthesize_radar_rx(X, 0.0, 0.2, 2, np.zeros((4, 4)), 0.0).Y_s
        assert not np.any(Y)

    def test_rank_one_echo(self, rng):
        X = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
        Y = synthesize_radar_rx(X, 1.0, 0.0, 2, np.zeros((4, 4)), 0.0).Y_s
        a = steering_vector(0.0, 4)
        np.testing.assert_allclose(Y, np.outer(a, a @ X @ dft_matrix(8)), atol=1e-14)
        assert np.linalg.matrix_rank(Y, tol=1e-10) == 1

    def test_full_model_assembly(self, rng):
        M, N, n_t = 3, 8, 2
        X = rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))
        H_SI = rng.standard_normal((M, M))
        F = dft_matrix(N)
        snap = synthesize_radar_rx(X, 0.3 - 0.1j, 0.25, n_t, H_SI, 1e-3,
                                   rng=np.random.default_rng(9))
        Z = synthesize_radar_rx(np.zeros((M, N)), 0.0, 0.25, n_t, np.zeros((M, M)), 1e-3,
                                rng=np.random.default_rng(9)).Y_s
        a = steering_vector(0.25, M)
        ref = 0.3 - 0.1j
        ref = ref * np.outer(a, a @ X @ F) + H_SI @ X @ F @ delay_shift_matrix(N, n_t) + Z
        np.testing.assert_allclose(snap.Y_s, ref, atol=1e-13)

    def test_repeatable(self, rng):
        X = rng.standard_normal((4, 8))
        H = rng.standard_normal((4, 4))
        y1 = synthesize_radar_rx(X, 1e-3, 0.5, 1, H, 1.0, rng=np.random.default_rng(3)).Y_s
        y2 = synthesize_radar_rx(X, 1e-3, 0.5, 1, H, 1.0, rng=np.random.default_rng(3)).Y_s
        assert np.array_equal(y1, y2)

    def test_h0_mode(self, rng):
        X = rng.standard_normal((4, 8))
        snap = synthesize_radar_rx(X, 5.0, 0.5, 1, np.zeros((4, 4)), 0.0, h0=True)
        assert snap.beta == 0.0 and not np.any(snap.Y_s)

    def test_dimension_errors(self, rng):
        with pytest.raises(DimensionError):
            synthesize_radar_rx(np.zeros((4, 8)), 1.0, 0.1, 1, np.zeros((3, 3)), 0.0)
        with pytest.raises(DimensionError):
            comm_rx(np.zeros((2, 4)), np.zeros(3), 0.0)

    def test_noise_needs_rng(self):
        with pytest.raises(ValueError):
            synthesize_radar_rx(np.ones((2, 4)), 0.0, 0.1, 1, np.zeros((2, 2)), 1.0)


class TestCommRx:
    def test_noiseless(self, rng):
        H = rng.standard_normal((2, 4))
        x = rng.standard_normal(4)
        assert not np.any(comm_rx(H, np.zeros(4), 0.0))
        np.testing.assert_array_equal(comm_rx(H, x, 0.0), H @ x)

    def test_noise_power(self, rng):
        H = np.zeros((100000, 1))
        y = comm_rx(H, np.zeros(1), 2e-12, rng)
        assert np.mean(np.abs(y) ** 2) == pytest.approx(2e-12, rel=0.02)
