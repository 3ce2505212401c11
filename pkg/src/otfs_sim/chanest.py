"""PN-pilot channel estimation in the delay-Doppler domain.

A maximal-length (m-) sequence of length N_p = 2^r - 1 is used as a
sounding pilot.  Each path shifts the pilot cyclically by delta samples,
modulates it by a discrete frequency ramp omega, and scales it by a
complex gain.  Correlating the received sequence against every shifted /
modulated pilot hypothesis (the matched-filter matrix) produces one sharp
peak per path; peak locations give the shifts and peak values the gains,
from which the equivalent channel matrix is rebuilt.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .channel import (
    ChannelRealization,
    EquivChannelMatrix,
    build_H,
    frobenius_diff,
    make_integer_tap,
)
from .lattice import FrameConfig

logger = logging.getLogger(__name__)

# Feedback tap positions of one primitive polynomial per LFSR degree.
# Fixed so that pilot sequences are bit-reproducible across runs.
PRIMITIVE_TAPS = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 6, 4, 1),
    13: (13, 4, 3, 1),
    14: (14, 5, 3, 1),
    15: (15, 14),
    16: (16, 15, 13, 4),
}


@dataclass(frozen=True)
class PNPilot:
    """Unit-norm bipolar m-sequence pilot of length N_p = 2^r - 1."""

    seq: np.ndarray
    r: int

    @property
    def n_p(self) -> int:
        return len(self.seq)


def gen_pn_sequence(r: int) -> PNPilot:
    """Maximal-length LFSR sequence, bits mapped to (1 - 2b)/sqrt(N_p)."""
    if r not in PRIMITIVE_TAPS:
        raise ValueError(f"unsupported LFSR degree {r}; supported: {sorted(PRIMITIVE_TAPS)}")
    taps = PRIMITIVE_TAPS[r]
    n_p = 2**r - 1
    state = [1] * r
    bits = np.empty(n_p, dtype=np.int64)
    for i in range(n_p):
        bits[i] = state[-1]
        fb = 0
        for t in taps:
            fb ^= state[t - 1]
        state = [fb] + state[:-1]
    seq = (1.0 - 2.0 * bits) / np.sqrt(n_p)
    return PNPilot(seq=seq, r=r)


@dataclass(frozen=True)
class PilotPath:
    """One path of the discrete pilot model: gain and cyclic shifts."""

    gain: complex
    delta: int
    omega: int


@dataclass(frozen=True)
class DiscretePilotModel:
    """Discrete cyclic-shift channel seen by a length-N_p pilot.

    K is the guard length (channel time spread in samples); W the sampling
    bandwidth used for the physical <-> discrete parameter mapping.
    """

    paths: tuple[PilotPath, ...]
    n_p: int
    K: int
    W: float


def _e(t, n_p):
    return np.exp(2j * np.pi * t / n_p)


def discretize_channel(
    ch: ChannelRealization,
    W: float,
    n_p: int,
    mode: str = "physical",
) -> DiscretePilotModel:
    """Map channel taps to discrete pilot-domain parameters.

    mode "physical": delta_i = tau_i * W (delays must sit on the 1/W
    sampling grid) and omega_i = N_p * nu_i / W rounded to the nearest
    integer (rounding is logged).  mode "dd": the pilot grid is taken
    congruent with the frame's delay-Doppler grid, delta_i = alpha_i and
    omega_i = beta_i; requires an integer-Doppler channel.  The gain
    carries the guard-interval phase exp(j2pi omega K / N_p) so that the
    inversion recovers h_i' exactly for on-grid paths.
    """
    if mode not in ("physical", "dd"):
        raise ValueError(f"unknown discretization mode {mode!r}")
    deltas, omegas = [], []
    for tap in ch.taps:
        if mode == "physical":
            d_exact = tap.tau * W
            delta = int(round(d_exact))
            if abs(d_exact - delta) > 1e-6:
                logger.info("delay %.3e s off the 1/W grid; rounded %g -> %d", tap.tau, d_exact, delta)
            w_exact = n_p * tap.nu / W
            omega = int(round(w_exact)) % n_p
            if abs(w_exact - round(w_exact)) > 1e-9:
                logger.info("Doppler %.3e Hz off the W/N_p grid; rounded %g -> %d", tap.nu, w_exact, omega)
        else:
            if tap.gamma != 0.0:
                raise ValueError("dd-mode discretization requires an integer-Doppler channel")
            delta = tap.alpha
            omega = tap.beta % n_p
        deltas.append(delta % n_p)
        omegas.append(omega)
    K = max(deltas) if deltas else 0
    paths = tuple(
        PilotPath(gain=tap.h_prime * _e(omega * K, n_p), delta=delta, omega=omega)
        for tap, delta, omega in zip(ch.taps, deltas, omegas)
    )
    return DiscretePilotModel(paths=paths, n_p=n_p, K=K, W=W)


def simulate_pilot_rx(
    S: PNPilot,
    model: DiscretePilotModel,
    sigma2: float,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Received pilot R[n] = sum_i gain_i e(omega_i n) S[(n - delta_i) mod N_p] + v[n]."""
    if model.n_p != S.n_p:
        raise ValueError(f"pilot length {S.n_p} != model length {model.n_p}")
    n_p = S.n_p
    n = np.arange(n_p)
    R = np.zeros(n_p, dtype=np.complex128)
    for p in model.paths:
        R += p.gain * _e(p.omega * n, n_p) * np.roll(S.seq, p.delta)
    if sigma2 < 0:
        raise ValueError(f"noise variance must be >= 0, got {sigma2}")
    if sigma2 > 0:
        if rng is None:
            raise ValueError("rng required for noisy pilot simulation")
        s = np.sqrt(sigma2 / 2.0)
        R = R + rng.normal(scale=s, size=n_p) + 1j * rng.normal(scale=s, size=n_p)
    return R


def pilot_snr_to_sigma2(snr_db: float, model: DiscretePilotModel) -> float:
    """Per-sample noise variance for a given pilot SNR.

    SNR is mean received sample power over noise variance; with a unit-norm
    pilot the mean sample power is sum |gain_i|^2 / N_p.
    """
    p_sig = sum(abs(p.gain) ** 2 for p in model.paths) / model.n_p
    return p_sig * 10.0 ** (-snr_db / 10.0)


def matched_filter_matrix(R: np.ndarray, S: PNPilot) -> np.ndarray:
    """All inner products M[delta, omega] = <R, e(omega n) S[n - delta]>.

    Computed row-wise via the FFT along n; matches the literal triple loop
    (see matched_filter_matrix_reference).
    """
    R = np.asarray(R, dtype=np.complex128)
    if R.size != S.n_p:
        raise ValueError(f"length mismatch: R {R.size}, S {S.n_p}")
    n_p = S.n_p
    n = np.arange(n_p)
    # Z[delta, n] = R[n] * conj(S[n - delta]); row FFT gives the omega axis.
    shifted = S.seq[(n[None, :] - n[:, None]) % n_p]
    Z = R[None, :] * np.conj(shifted)
    return np.fft.fft(Z, axis=1)


def matched_filter_matrix_reference(R: np.ndarray, S: PNPilot) -> np.ndarray:
    """Literal O(N_p^3) evaluation of the matched-filter matrix."""
    R = np.asarray(R, dtype=np.complex128)
    n_p = S.n_p
    out = np.empty((n_p, n_p), dtype=np.complex128)
    for delta in range(n_p):
        for omega in range(n_p):
            acc = 0.0 + 0.0j
            for n in range(n_p):
                acc += R[n] * np.conj(_e(omega * n, n_p) * S.seq[(n - delta) % n_p])
            out[delta, omega] = acc
    return out


def detect_peaks(MF: np.ndarray, P: int | None = None, threshold: float | None = None):
    """Largest-magnitude cells of the matched-filter matrix.

    Default mode returns the P largest peaks; threshold mode returns every
    cell with magnitude above the threshold.  Ties break by (delta, omega)
    lexicographic order.  Returns a list of (delta, omega, complex value).
    """
    n_p2 = MF.size
    mag = np.abs(MF).ravel()
    n_p = MF.shape[0]
    deltas, omegas = np.divmod(np.arange(n_p2), MF.shape[1])
    order = np.lexsort((omegas, deltas, -mag))
    if P is not None:
        if P < 1 or P > n_p2:
            raise ValueError(f"P={P} out of range [1, {n_p2}]")
        chosen = order[:P]
    elif threshold is not None:
        chosen = order[mag[order] > threshold]
    else:
        raise ValueError("either P or threshold must be given")
    return [(int(deltas[i]), int(omegas[i]), complex(MF.ravel()[i])) for i in chosen]


def default_peak_threshold(n_p: int, c: float = 3.0) -> float:
    """Threshold c/sqrt(N_p) for threshold-mode peak picking."""
    return c / math.sqrt(n_p)


def params_to_channel(
    estimates,
    model: DiscretePilotModel,
    cfg: FrameConfig,
    mode: str = "physical",
    E: int = 0,
) -> ChannelRealization:
    """Invert the discrete pilot model back to an integer-Doppler channel.

    Per estimate (delta, omega, gain): h' = gain * e(-omega K); the shifts
    map back to frame taps either through the physical rates (tau = delta/W,
    nu = omega W / N_p, re-quantized to the frame lattice) or directly
    (alpha = delta, beta = omega) in "dd" mode.
    """
    if mode not in ("physical", "dd"):
        raise ValueError(f"unknown discretization mode {mode!r}")
    n_p = model.n_p
    taps = []
    for delta, omega, gain in estimates:
        h_prime = gain * _e(-omega * model.K, n_p)
        omega_signed = omega - n_p if omega > n_p // 2 else omega
        if mode == "physical":
            tau_hat = delta / model.W
            nu_hat = omega_signed * model.W / n_p
            alpha = int(round(tau_hat * cfg.M * cfg.delta_f)) % cfg.M
            beta = int(round(nu_hat * cfg.N * cfg.T)) % cfg.N
        else:
            alpha = delta % cfg.M
            beta = omega_signed % cfg.N
        # make_integer_tap stores h; h' = h e^{-j2pi nu tau} on the lattice
        nu_l = beta / (cfg.N * cfg.T)
        tau_l = alpha / (cfg.M * cfg.delta_f)
        h = h_prime * np.exp(2j * np.pi * nu_l * tau_l)
        taps.append(make_integer_tap(h, alpha, beta, cfg))
    return ChannelRealization(taps=tuple(taps), E=E, cfg=cfg)


def estimation_error(H: EquivChannelMatrix, H_e: EquivChannelMatrix) -> float:
    """Frobenius norm of H - H_e."""
    return frobenius_diff(H, H_e)


def estimate_channel(
    R: np.ndarray,
    S: PNPilot,
    model: DiscretePilotModel,
    P: int,
    cfg: FrameConfig,
    mode: str = "physical",
    E: int = 0,
) -> tuple[ChannelRealization, EquivChannelMatrix]:
    """Full pilot-side pipeline: matched filter -> peaks -> channel -> H_e."""
    MF = matched_filter_matrix(R, S)
    peaks = detect_peaks(MF, P=P)
    ch_hat = params_to_channel(peaks, model, cfg, mode=mode, E=E)
    return ch_hat, build_H(ch_hat)


def dump_mf_csv(MF: np.ndarray, path) -> None:
    """Write the matched-filter grid as CSV: delta, omega, |M|, re, im."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["delta", "omega", "abs", "re", "im"])
        for delta in range(MF.shape[0]):
            for omega in range(MF.shape[1]):
                v = MF[delta, omega]
                w.writerow([delta, omega, abs(v), np.real(v), np.imag(v)])
