"""Symplectic finite Fourier transform pair between delay-Doppler and
time-frequency grids, plus rectangular windowing.

Conventions (fixed, see tests against the literal double sums):

* ISFFT:  X[n, m] = (1/MN) sum_k sum_l x[k, l] exp(+j2pi(nk/N - ml/M))
* SFFT:   x[k, l] = sum_n sum_m X[n, m] exp(-j2pi(nk/N - ml/M))

The 1/MN normalization sits entirely on the ISFFT, and the two axes carry
opposite exponent signs (the symplectic part).  Grids are (N, M) arrays:
axis 0 is k (Doppler) / n (time), axis 1 is l (delay) / m (frequency).
Periodization of a single rectangular-windowed frame is the identity and
is not represented explicitly.
"""

from __future__ import annotations

import numpy as np


class UnsupportedWindowError(ValueError):
    """Raised for any window other than the rectangular (all-ones) one."""


def isfft(x: np.ndarray) -> np.ndarray:
    """Delay-Doppler grid -> time-frequency grid (fast separable path)."""
    x = np.asarray(x, dtype=np.complex128)
    N, M = x.shape
    # sum_k x e^{+j2pi nk/N} = N * ifft along axis 0;
    # sum_l (.) e^{-j2pi ml/M} = fft along axis 1; overall factor 1/M.
    return np.fft.fft(np.fft.ifft(x, axis=0), axis=1) / M


def sfft(X: np.ndarray) -> np.ndarray:
    """Time-frequency grid -> delay-Doppler grid; exact inverse of isfft."""
    X = np.asarray(X, dtype=np.complex128)
    N, M = X.shape
    return np.fft.ifft(np.fft.fft(X, axis=0), axis=1) * M


def isfft_reference(x: np.ndarray) -> np.ndarray:
    """Literal double-sum ISFFT; normative reference for the fast path."""
    x = np.asarray(x, dtype=np.complex128)
    N, M = x.shape
    n = np.arange(N)
    m = np.arange(M)
    Ek = np.exp(2j * np.pi * np.outer(n, n) / N)    # e^{+j2pi nk/N}
    El = np.exp(-2j * np.pi * np.outer(m, m) / M)   # e^{-j2pi ml/M}
    return Ek @ x @ El.T / (M * N)


def sfft_reference(X: np.ndarray) -> np.ndarray:
    """Literal double-sum SFFT."""
    X = np.asarray(X, dtype=np.complex128)
    N, M = X.shape
    n = np.arange(N)
    m = np.arange(M)
    Ek = np.exp(-2j * np.pi * np.outer(n, n) / N)
    El = np.exp(2j * np.pi * np.outer(m, m) / M)
    return Ek @ X @ El.T


def apply_window(X: np.ndarray, window="rect") -> np.ndarray:
    """Elementwise transmit/receive windowing.

    Only the rectangular (all-ones) window is supported; anything else
    raises UnsupportedWindowError.
    """
    X = np.asarray(X)
    if isinstance(window, str):
        if window != "rect":
            raise UnsupportedWindowError(f"unsupported window spec {window!r}")
        return X.copy()
    W = np.asarray(window)
    if W.shape != X.shape or not np.all(W == 1):
        raise UnsupportedWindowError("only the all-ones rectangular window is supported")
    return X.copy()
