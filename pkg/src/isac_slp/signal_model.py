"""Physical model of the full-duplex OFDM-MIMO ISAC link.

Steering vectors, the unitary conjugate-DFT operator, delay shifts,
channel/symbol samplers and synthesis of the radar receive block

    Y_s = beta a(theta) a(theta)^T X F + H_SI X F I_nt + Z_s.

All vectorisation is column-major.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

SPEED_OF_LIGHT = 299792458.0


class DimensionError(ValueError):
    """Array shapes are inconsistent with each other or the config."""


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def dbm_to_watts(dbm):
    return 10.0 ** ((float(dbm) - 30.0) / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Scenario constants. Powers and variances are linear watts."""

    M: int = 32
    K: int = 8
    N: int = 256
    delta_f: float = 120e3
    P_T: float = 1.0
    sigma_c2: float = 1e-12
    sigma_s2: float = 1e-12
    sigma_si2: float = 1e-11
    gamma: tuple = (10.0,) * 8
    phi: float = math.pi / 4
    C0_db: float = 20.0
    c0_convention: str = "amplitude"
    alpha: float = 2.0
    d_t: float = 1000.0
    theta_true: float = math.radians(30.0)
    theta_prior: tuple = (math.radians(29.0), math.radians(31.0))
    user_radius: float = 100.0
    v_c: float = SPEED_OF_LIGHT
    antenna_spacing_ratio: float = 0.5
    channel_model: str = "iid"
    tdl_taps: int = 4
    tdl_decay: float = 1.0
    beta_random_phase: bool = False

    def __post_init__(self):
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if gamma.size != self.K and np.all(gamma == gamma[0]):
            gamma = np.full(self.K, gamma[0])
        if gamma.size != self.K:
            raise ValueError(f"need {self.K} SINR targets, got {gamma.size}")
        gamma = tuple(float(g) for g in gamma)
        object.__setattr__(self, "gamma", gamma)
        self.validate()

    def validate(self):
        if min(self.M, self.K, self.N) < 1:
            raise ValueError("M, K and N must be positive")
        if self.K > self.M:
            raise ValueError(f"K={self.K} users exceed M={self.M} antennas")
        if self.N & (self.N - 1):
            raise ValueError(f"N={self.N} is not a power of two")
        for name in ("delta_f", "P_T", "sigma_c2", "sigma_s2", "v_c", "user_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.sigma_si2 < 0:
            raise ValueError("sigma_si2 must be nonnegative")
        if not 0 < self.phi < math.pi / 2:
            raise ValueError("phi must lie in (0, pi/2)")
        if any(g <= 0 for g in self.gamma):
            raise ValueError("SINR targets must be positive")
        if self.c0_convention not in ("amplitude", "power"):
            raise ValueError(f"unknown c0_convention {self.c0_convention!r}")
        if self.channel_model not in ("iid", "tdl"):
            raise ValueError(f"unknown channel_model {self.channel_model!r}")
        lo, hi = self.theta_prior
        if not lo <= hi:
            raise ValueError("theta_prior must be (low, high)")

    @property
    def T_s(self):
        return 1.0 / (self.N * self.delta_f)

    @property
    def Gamma(self):
        """Per-user constructive-region offsets sqrt(gamma_k sigma_c^2)."""
        return np.sqrt(np.asarray(self.gamma) * self.sigma_c2)

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class ChannelRealization:
    H: np.ndarray  # (N, K, M)
    H_SI: np.ndarray  # (M, M)
    user_distances: np.ndarray  # (K,)


@dataclass
class SymbolBlock:
    s: np.ndarray  # (K, N), unit modulus


@dataclass
class RadarSnapshot:
    Y_s: np.ndarray  # (..., M, N)
    n_t: int
    beta: complex
    extras: dict = field(default_factory=dict)


def steering_vector(theta, M, spacing_ratio=0.5):
    """ULA steering vector ``exp(-j 2 pi (d/lambda) m sin(theta))``, m = 0..M-1."""
    theta = np.asarray(theta, dtype=float)
    if np.any(np.abs(theta) >= math.pi / 2):
        raise ValueError("steering angle must satisfy |theta| < pi/2")
    m = np.arange(M)
    phase = -2.0 * math.pi * spacing_ratio * np.multiply.outer(np.sin(theta), m)
    return np.exp(1j * phase)


def extended_steering(theta, M, spacing_ratio=0.5):
    a = steering_vector(theta, M, spacing_ratio)
    return np.kron(a, a)


def dft_matrix(N):
    """Unitary conjugate DFT, entry (m, n) = exp(+j 2 pi m n / N) / sqrt(N)."""
    if N < 1:
        raise ValueError("N must be positive")
    idx = np.arange(N)
    # reduce m*n mod N first so large N keeps full phase accuracy
    return np.exp(2j * math.pi * (np.outer(idx, idx) % N) / N) / math.sqrt(N)


def delay_shift_matrix(N, n_t):
    """N x N matrix with ones on the ``n_t``-th subdiagonal."""
    if not 0 <= n_t < N:
        raise ValueError(f"delay n_t={n_t} outside [0, {N})")
    return np.eye(N, k=-n_t)


def normalized_delay(d_t, config):
    """Round-trip delay in samples, ``floor(2 d_t / v_c / T_s)``."""
    if d_t < 0:
        raise ValueError("target distance must be nonnegative")
    n_t = int(math.floor(2.0 * d_t / config.v_c * config.N * config.delta_f))
    if n_t >= config.N:
        raise ValueError(
            f"target at {d_t} m gives delay {n_t} >= N={config.N} samples"
        )
    return n_t


def c0_linear(config):
    if config.c0_convention == "amplitude":
        return 10.0 ** (config.C0_db / 20.0)
    return 10.0 ** (config.C0_db / 10.0)


def attenuation(d_t, config, rng=None):
    """Round-trip attenuation ``(C0 d_t^-alpha)^2``, optionally with random phase."""
    if d_t < 1.0:
        raise ValueError("attenuation model needs d_t >= 1 m")
    mag = (c0_linear(config) * d_t ** (-config.alpha)) ** 2
    if config.beta_random_phase:
        if rng is None:
            raise ValueError("random-phase attenuation needs a generator")
        return mag * np.exp(2j * math.pi * rng.random())
    return complex(mag)


def path_loss_db(d_m):
    return 140.7 + 36.7 * np.log10(np.asarray(d_m, dtype=float) / 1000.0)


def crandn(rng, shape, var=1.0):
    """Circular complex Gaussian samples with E|z|^2 = var."""
    scale = np.sqrt(np.asarray(var, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_si_channel(M, sigma_si2, rng, size=None):
    """Residual SI channel(s); ``size`` adds a leading batch axis."""
    shape = (M, M) if size is None else (size, M, M)
    if sigma_si2 == 0:
        return np.zeros(shape, dtype=complex)
    return crandn(rng, shape, sigma_si2)


def sample_channels(config, rng, distances=None):
    """Draw user positions, downlink channels and the residual SI channel.

    Distances are area-uniform on the disc unless given. Each user's row
    of ``H_n`` has per-entry variance from the 140.7 + 36.7 log10(d_km) dB
    path loss.
    """
    M, K, N = config.M, config.K, config.N
    if distances is None:
        distances = config.user_radius * np.sqrt(rng.random(K))
    distances = np.asarray(distances, dtype=float)
    var = 10.0 ** (-path_loss_db(distances) / 10.0)
    if config.channel_model == "iid":
        H = crandn(rng, (N, K, M)) * np.sqrt(var)[None, :, None]
    else:
        L = config.tdl_taps
        profile = np.exp(-config.tdl_decay * np.arange(L))
        profile /= profile.sum()
        taps = crandn(rng, (L, K, M)) * np.sqrt(profile)[:, None, None]
        phase = np.exp(-2j * math.pi * np.outer(np.arange(N), np.arange(L)) / N)
        H = np.einsum("nl,lkm->nkm", phase, taps) * np.sqrt(var)[None, :, None]
    H_SI = sample_si_channel(M, config.sigma_si2, rng)
    return ChannelRealization(H=H, H_SI=H_SI, user_distances=distances)


def psk_alphabet(order=4):
    """Unit-modulus PSK points rotated by pi/order (QPSK -> e^{j pi/4}, ...)."""
    return np.exp(1j * math.pi * (2 * np.arange(order) + 1) / order)


def sample_symbols(config, rng, order=4):
    idx = rng.integers(0, order, size=(config.K, config.N))
    return SymbolBlock(s=psk_alphabet(order)[idx])


def synthesize_radar_rx(X, beta, theta, n_t, H_SI, sigma_s2, rng=None,
                        spacing_ratio=0.5, h0=False, batch=None):
    """Radar receive block for precoder ``X`` (M x N).

    ``H_SI`` may carry leading batch dimensions; ``batch`` adds a leading
    trial axis of that length to the noise. ``h0=True`` drops the echo.
    """
    X = np.asarray(X)
    if X.ndim != 2:
        raise DimensionError("X must be M x N")
    M, N = X.shape
    H_SI = np.asarray(H_SI)
    if H_SI.shape[-2:] != (M, M):
        raise DimensionError(f"H_SI must be {M} x {M}, got {H_SI.shape[-2:]}")
    F = dft_matrix(N)
    XF = X @ F
    XF_nt = XF @ delay_shift_matrix(N, n_t)
    shape = (M, N) if batch is None else (batch, M, N)
    Y = np.zeros(np.broadcast_shapes(H_SI.shape[:-2] + (M, N), shape), dtype=complex)
    if not h0 and beta != 0:
        a = steering_vector(theta, M, spacing_ratio)
        Y = Y + beta * np.outer(a, a @ XF)
    if np.any(H_SI):
        Y = Y + H_SI @ XF_nt
    if sigma_s2 > 0:
        if rng is None:
            raise ValueError("noise synthesis needs a generator")
        Y = Y + crandn(rng, Y.shape, sigma_s2)
    return RadarSnapshot(Y_s=Y, n_t=n_t, beta=0.0 if h0 else beta)


def comm_rx(H_n, x_n, sigma_c2, rng=None):
    H_n = np.asarray(H_n)
    x_n = np.asarray(x_n)
    if H_n.shape[1] != x_n.shape[0]:
        raise DimensionError(f"H_n {H_n.shape} incompatible with x_n {x_n.shape}")
    y = H_n @ x_n
    if sigma_c2 > 0:
        y = y + crandn(rng, y.shape, sigma_c2)
    return y
