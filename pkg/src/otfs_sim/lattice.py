"""Delay-Doppler frame configuration, symbol alphabets, and index conventions.

A frame is an N x M complex grid ``x[k, l]`` with k the Doppler row
(0 <= k < N) and l the delay column (0 <= l < M).  The canonical
vectorization places ``x[k, l]`` at vector index ``k + N*l`` (k fastest),
i.e. column-major order of the (N, M) grid.  Every other module relies on
these two conventions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrameConfig:
    """Lattice dimensions and physical scaling of one OTFS frame.

    M delay bins (subcarriers), N Doppler bins (multicarrier symbols),
    subcarrier spacing ``delta_f`` in Hz.  The symbol duration T = 1/delta_f
    is derived, never stored, so T * delta_f == 1 holds exactly.
    """

    M: int
    N: int
    delta_f: float
    carrier_hz: float

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise ValueError(f"grid dimensions must be >= 1, got M={self.M}, N={self.N}")
        if self.delta_f <= 0:
            raise ValueError(f"subcarrier spacing must be positive, got {self.delta_f}")

    @property
    def T(self) -> float:
        """Multicarrier symbol duration in seconds."""
        return 1.0 / self.delta_f

    @property
    def n_symbols(self) -> int:
        """Symbols per frame (grid size N*M)."""
        return self.N * self.M

    @property
    def delay_resolution(self) -> float:
        """Delay bin width 1/(M*delta_f) in seconds."""
        return 1.0 / (self.M * self.delta_f)

    @property
    def doppler_resolution(self) -> float:
        """Doppler bin width 1/(N*T) = delta_f/N in Hz."""
        return self.delta_f / self.N

    @property
    def frame_duration(self) -> float:
        """Frame length N*T in seconds."""
        return self.N * self.T


def make_frame_config(M: int, N: int, delta_f: float, carrier_hz: float) -> FrameConfig:
    """Build a validated FrameConfig (rejects nonpositive inputs)."""
    return FrameConfig(M=M, N=N, delta_f=delta_f, carrier_hz=carrier_hz)


@dataclass(frozen=True)
class Alphabet:
    """Unit-energy modulation alphabet with an index <-> bit-label mapping.

    ``points[i]`` is labeled by the big-endian bit pattern of i over
    ``bits_per_symbol`` bits.
    """

    points: np.ndarray
    bits_per_symbol: int
    name: str = field(default="custom")

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.complex128)
        object.__setattr__(self, "points", pts)
        if len(pts) != 2 ** self.bits_per_symbol:
            raise ValueError(
                f"alphabet size {len(pts)} does not match 2^{self.bits_per_symbol}"
            )
        energy = np.mean(np.abs(pts) ** 2)
        if abs(energy - 1.0) > 1e-12:
            raise ValueError(f"alphabet mean energy {energy} != 1")

    def __len__(self) -> int:
        return len(self.points)

    def nearest_index(self, values: np.ndarray) -> np.ndarray:
        """Index of the closest constellation point for each value."""
        values = np.asarray(values, dtype=np.complex128)
        d = np.abs(values[..., None] - self.points[None, :])
        return np.argmin(d, axis=-1)


def bpsk() -> Alphabet:
    """BPSK alphabet: bit 0 -> +1, bit 1 -> -1."""
    return Alphabet(points=np.array([1.0, -1.0]), bits_per_symbol=1, name="bpsk")


def qam4() -> Alphabet:
    """Gray-labeled unit-energy 4-QAM."""
    pts = np.array([1 + 1j, -1 + 1j, 1 - 1j, -1 - 1j]) / np.sqrt(2.0)
    return Alphabet(points=pts, bits_per_symbol=2, name="qam4")


def vec_index(k: int, l: int, N: int, M: int) -> int:
    """Vector position of grid element (k, l): k + N*l."""
    if not (0 <= k < N):
        raise ValueError(f"Doppler index k={k} out of range [0, {N})")
    if not (0 <= l < M):
        raise ValueError(f"delay index l={l} out of range [0, {M})")
    return k + N * l


def vec_index_inverse(idx: int, N: int, M: int) -> tuple[int, int]:
    """Grid coordinates (k, l) of vector position idx."""
    if not (0 <= idx < N * M):
        raise ValueError(f"vector index {idx} out of range [0, {N * M})")
    return idx % N, idx // N


def vectorize(grid: np.ndarray) -> np.ndarray:
    """Flatten an (N, M) grid to length N*M with k fastest (column-major)."""
    return np.asarray(grid).ravel(order="F")


def devectorize(vec: np.ndarray, N: int, M: int) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    vec = np.asarray(vec)
    if vec.size != N * M:
        raise ValueError(f"vector length {vec.size} != N*M = {N * M}")
    return vec.reshape((N, M), order="F")


def map_bits(bits: np.ndarray, alphabet: Alphabet, cfg: FrameConfig) -> np.ndarray:
    """Map a bit sequence onto an (N, M) frame in vectorization order."""
    bits = np.asarray(bits, dtype=np.int64)
    expected = cfg.n_symbols * alphabet.bits_per_symbol
    if bits.size != expected:
        raise ValueError(f"need {expected} bits, got {bits.size}")
    groups = bits.reshape(cfg.n_symbols, alphabet.bits_per_symbol)
    weights = 2 ** np.arange(alphabet.bits_per_symbol - 1, -1, -1)
    idx = groups @ weights
    return devectorize(alphabet.points[idx], cfg.N, cfg.M)


def demap_symbols(frame: np.ndarray, alphabet: Alphabet) -> np.ndarray:
    """Recover the bit sequence from a frame of constellation points."""
    idx = alphabet.nearest_index(vectorize(frame))
    shifts = np.arange(alphabet.bits_per_symbol - 1, -1, -1)
    bits = (idx[:, None] >> shifts[None, :]) & 1
    return bits.ravel()


def delay_to_tap(tau: float, cfg: FrameConfig) -> int:
    """Nearest delay-tap index alpha = round(tau * M * delta_f), reduced mod M."""
    if tau < 0:
        raise ValueError(f"delay must be nonnegative, got {tau}")
    alpha = int(round(tau * cfg.M * cfg.delta_f))
    if alpha >= cfg.M:
        logger.info("delay %.3e s wraps past the delay period (alpha=%d, M=%d)", tau, alpha, cfg.M)
    return alpha % cfg.M


def doppler_to_tap(nu: float, cfg: FrameConfig) -> tuple[int, float]:
    """Doppler-tap decomposition nu * N * T = beta + gamma with 0 <= gamma < 1.

    beta is reduced modulo N; the fractional part gamma is kept.
    """
    x = nu * cfg.N * cfg.T
    beta = int(np.floor(x))
    gamma = x - beta
    if gamma >= 1.0:  # guard against float edge at exact integers
        beta += 1
        gamma = 0.0
    if not (0 <= beta < cfg.N):
        logger.info("Doppler %.3e Hz wraps past the Doppler period (beta=%d, N=%d)", nu, beta, cfg.N)
    return beta % cfg.N, gamma


def tap_to_delay(alpha: int, cfg: FrameConfig) -> float:
    """Delay in seconds of tap index alpha."""
    return alpha / (cfg.M * cfg.delta_f)


def tap_to_doppler(beta: int, gamma: float, cfg: FrameConfig) -> float:
    """Doppler in Hz of tap (beta, gamma)."""
    return (beta + gamma) / (cfg.N * cfg.T)
