"""Sparse delay-Doppler channels and the equivalent linear model y = Hx + v.

A channel is a set of P discrete taps (gain, delay, Doppler).  Delays are
snapped to the delay lattice (alpha integer); Dopplers keep a fractional
part gamma which spreads one path over 2E+1 neighboring Doppler bins
(inter-Doppler interference).  The whole chain is equivalent to a sparse
NM x NM matrix H acting on the vectorized frame.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg

from .lattice import (
    FrameConfig,
    delay_to_tap,
    doppler_to_tap,
    tap_to_delay,
    tap_to_doppler,
    vectorize,
)

DEFAULT_IDI_HALFWIDTH = 4


@dataclass(frozen=True)
class ChannelTap:
    """One propagation path: complex gain plus quantized delay/Doppler."""

    h: complex
    tau: float
    nu: float
    alpha: int
    beta: int
    gamma: float

    @property
    def h_prime(self) -> complex:
        """Effective gain h * exp(-j2pi nu tau) of the discrete model."""
        return self.h * np.exp(-2j * np.pi * self.nu * self.tau)


@dataclass(frozen=True)
class ChannelRealization:
    """P-tap channel tied to a frame configuration, with IDI half-width E."""

    taps: tuple[ChannelTap, ...]
    E: int
    cfg: FrameConfig

    def __post_init__(self):
        if len(self.taps) < 1:
            raise ValueError("channel needs at least one tap")
        if self.E < 0:
            raise ValueError(f"IDI half-width must be >= 0, got {self.E}")

    @property
    def P(self) -> int:
        return len(self.taps)

    @property
    def is_integer_doppler(self) -> bool:
        return all(t.gamma == 0.0 for t in self.taps)


def make_tap(h: complex, tau: float, nu: float, cfg: FrameConfig) -> ChannelTap:
    """Quantize (tau, nu) onto the frame lattice and build a tap.

    The delay is rounded to the nearest tap (and stored re-snapped so that
    tau * M * delta_f == alpha exactly); the Doppler keeps its fractional
    part gamma.
    """
    alpha = delay_to_tap(tau, cfg)
    beta, gamma = doppler_to_tap(nu, cfg)
    return ChannelTap(h=complex(h), tau=tap_to_delay(alpha, cfg), nu=nu,
                      alpha=alpha, beta=beta, gamma=gamma)


def make_integer_tap(h: complex, alpha: int, beta: int, cfg: FrameConfig) -> ChannelTap:
    """Tap sitting exactly on the lattice (gamma = 0)."""
    return ChannelTap(
        h=complex(h),
        tau=tap_to_delay(alpha % cfg.M, cfg),
        nu=tap_to_doppler(beta % cfg.N, 0.0, cfg),
        alpha=alpha % cfg.M,
        beta=beta % cfg.N,
        gamma=0.0,
    )


def sample_channel(
    delay_profile_s,
    nu_max: float,
    cfg: FrameConfig,
    rng: np.random.Generator,
    E: int = DEFAULT_IDI_HALFWIDTH,
    integer_doppler: bool = False,
) -> ChannelRealization:
    """Draw a random channel with the given delay profile.

    Gains are i.i.d. CN(0, 1/P) (uniform power profile normalized to unit
    total power); Dopplers are nu_max * cos(theta) with theta ~ U(0, pi).
    With ``integer_doppler`` each Doppler is rounded to the nearest lattice
    bin (gamma forced to 0).
    """
    delays = list(delay_profile_s)
    if not delays:
        raise ValueError("delay profile is empty")
    if nu_max < 0:
        raise ValueError(f"nu_max must be >= 0, got {nu_max}")
    P = len(delays)
    scale = np.sqrt(1.0 / (2 * P))
    gains = rng.normal(scale=scale, size=P) + 1j * rng.normal(scale=scale, size=P)
    thetas = rng.uniform(0.0, np.pi, size=P)
    nus = nu_max * np.cos(thetas)
    taps = []
    for h, tau, nu in zip(gains, delays, nus):
        tap = make_tap(h, tau, nu, cfg)
        if integer_doppler:
            beta = int(round(nu * cfg.N * cfg.T)) % cfg.N
            tap = make_integer_tap(h, tap.alpha, beta, cfg)
        taps.append(tap)
    return ChannelRealization(taps=tuple(taps), E=E, cfg=cfg)


def g_factor(q: int, gamma: float, N: int) -> complex:
    """Doppler-spread coefficient of offset q for fractional Doppler gamma.

    Equals the normalized geometric sum
    (1/N) sum_{c=0}^{N-1} exp(-j(2pi/N)(-q - gamma)c); at the removable
    singularity (-q - gamma) == 0 (mod N) the value is exactly 1.  For
    gamma == 0 the result is exactly 1 or 0 (integer-Doppler orthogonality).
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if gamma == 0.0:
        return 1.0 + 0.0j if q % N == 0 else 0.0 + 0.0j
    z = -q - gamma
    den = N * (np.exp(-2j * np.pi * z / N) - 1.0)
    if abs(den) < 1e-9 * N:
        # near the removable singularity: fall back to the literal mean sum
        return complex(np.mean(np.exp(-2j * np.pi * z * np.arange(N) / N)))
    num = np.exp(-2j * np.pi * z) - 1.0
    return num / den


def f_factor(l: int, m: int, alpha: int, M: int) -> float:
    """Delay-matching factor: M when (l - m - alpha) mod M == 0, else 0."""
    return float(M) if (l - m - alpha) % M == 0 else 0.0


def apply_channel_dd(x: np.ndarray, ch: ChannelRealization) -> np.ndarray:
    """Noiseless channel action on an (N, M) frame, with IDI.

    y[k, l] = sum_i sum_{q=-E}^{E} h_i' G(q, gamma_i)
              x[(k - beta_i + q) mod N, (l - alpha_i) mod M]
    """
    x = np.asarray(x, dtype=np.complex128)
    cfg = ch.cfg
    if x.shape != (cfg.N, cfg.M):
        raise ValueError(f"frame shape {x.shape} != ({cfg.N}, {cfg.M})")
    y = np.zeros_like(x)
    for tap in ch.taps:
        hp = tap.h_prime
        for q in range(-ch.E, ch.E + 1):
            w = hp * g_factor(q, tap.gamma, cfg.N)
            if w == 0:
                continue
            y += w * np.roll(np.roll(x, tap.beta - q, axis=0), tap.alpha, axis=1)
    return y


def apply_channel_integer(x: np.ndarray, ch: ChannelRealization) -> np.ndarray:
    """Integer-Doppler specialization: superposition of 2D cyclic shifts."""
    if not ch.is_integer_doppler:
        raise ValueError("channel has fractional Doppler; use apply_channel_dd")
    x = np.asarray(x, dtype=np.complex128)
    cfg = ch.cfg
    if x.shape != (cfg.N, cfg.M):
        raise ValueError(f"frame shape {x.shape} != ({cfg.N}, {cfg.M})")
    y = np.zeros_like(x)
    for tap in ch.taps:
        y += tap.h_prime * np.roll(np.roll(x, tap.beta, axis=0), tap.alpha, axis=1)
    return y


class EquivChannelMatrix:
    """Sparse NM x NM equivalent channel with row and column access.

    Rows/columns are indexed like the vectorized frame: index r maps to
    (k, l) = (r mod N, r div N).
    """

    def __init__(self, coo: sp.coo_matrix, cfg: FrameConfig):
        self.cfg = cfg
        self.csr = coo.tocsr()
        self.csr.sum_duplicates()
        self.csr.eliminate_zeros()
        self.csc = self.csr.tocsc()

    @property
    def shape(self):
        return self.csr.shape

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.csr @ x

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """(row indices, values) of the nonzeros in column j."""
        sl = slice(self.csc.indptr[j], self.csc.indptr[j + 1])
        return self.csc.indices[sl], self.csc.data[sl]

    def nnz_per_row(self) -> np.ndarray:
        return np.diff(self.csr.indptr)

    def nnz_per_col(self) -> np.ndarray:
        return np.diff(self.csc.indptr)

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()


def build_H(ch: ChannelRealization) -> EquivChannelMatrix:
    """Equivalent channel matrix: H @ vectorize(x) == vectorize(apply_channel_dd(x))."""
    cfg = ch.cfg
    N, M = cfg.N, cfg.M
    NM = N * M
    cols = np.arange(NM)
    kk = cols % N
    ll = cols // N
    rows_parts, cols_parts, data_parts = [], [], []
    for tap in ch.taps:
        hp = tap.h_prime
        for q in range(-ch.E, ch.E + 1):
            w = hp * g_factor(q, tap.gamma, N)
            if w == 0:
                continue
            rows = (kk + tap.beta - q) % N + N * ((ll + tap.alpha) % M)
            rows_parts.append(rows)
            cols_parts.append(cols)
            data_parts.append(np.full(NM, w, dtype=np.complex128))
    coo = sp.coo_matrix(
        (np.concatenate(data_parts), (np.concatenate(rows_parts), np.concatenate(cols_parts))),
        shape=(NM, NM),
    )
    return EquivChannelMatrix(coo, cfg)


def add_awgn(y: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Add circularly-symmetric complex Gaussian noise of total variance sigma2."""
    if sigma2 < 0:
        raise ValueError(f"noise variance must be >= 0, got {sigma2}")
    if sigma2 == 0:
        return np.array(y, dtype=np.complex128, copy=True)
    y = np.asarray(y, dtype=np.complex128)
    s = np.sqrt(sigma2 / 2.0)
    return y + rng.normal(scale=s, size=y.shape) + 1j * rng.normal(scale=s, size=y.shape)


def snr_to_sigma2(snr_db: float) -> float:
    """Noise variance for a unit-energy alphabet and unit-power channel."""
    return 10.0 ** (-snr_db / 10.0)


def channel_matvec_frame(H: EquivChannelMatrix, x: np.ndarray) -> np.ndarray:
    """Convenience: H applied to a frame, returned as a vector."""
    return H.matvec(vectorize(x))


def dump_taps_csv(ch: ChannelRealization, path) -> None:
    """Write the tap list as CSV: i, re(h), im(h), tau_s, nu_hz, alpha, beta, gamma."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["i", "re_h", "im_h", "tau_s", "nu_hz", "alpha", "beta", "gamma"])
        for i, t in enumerate(ch.taps):
            w.writerow([i, np.real(t.h), np.imag(t.h), t.tau, t.nu, t.alpha, t.beta, t.gamma])


def frobenius_diff(A: EquivChannelMatrix, B: EquivChannelMatrix) -> float:
    """Frobenius norm of A - B (sparse)."""
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return sp.linalg.norm(A.csr - B.csr, ord="fro")
