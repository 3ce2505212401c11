"""Finite-alphabet detection for the vectorized model y = Hx + v.

Provides an exhaustive ML oracle for tiny instances and three Gibbs
samplers (conventional, temperature-scaled, randomized) that track the
best vector visited by least squared-residual cost.  The per-coordinate
conditional is computed incrementally from the current residual using
only the nonzeros of one column of H.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import EquivChannelMatrix
from .lattice import Alphabet

BRUTEFORCE_BIT_BUDGET = 20

MODE_CONVENTIONAL = "conventional"
MODE_TEMPERATURE = "temperature"
MODE_RANDOMIZED = "randomized"
_MODES = (MODE_CONVENTIONAL, MODE_TEMPERATURE, MODE_RANDOMIZED)


@dataclass(frozen=True)
class DetectorConfig:
    """Sampler settings: sweep count, temperature, update rule, mixing probability.

    r_mix is the probability of replacing the conditional draw by a draw
    from a random pmf (randomized mode only).  The default None means
    1/(NM), realized implicitly by drawing a uniform index i from
    {0..NM-1} and triggering on i == k.
    """

    n_iter: int = 3
    alpha_temp: float = 1.0
    mode: str = MODE_CONVENTIONAL
    r_mix: float | None = None

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError(f"n_iter must be >= 1, got {self.n_iter}")
        if self.alpha_temp < 1.0:
            raise ValueError(f"alpha_temp must be >= 1, got {self.alpha_temp}")
        if self.mode not in _MODES:
            raise ValueError(f"unknown detector mode {self.mode!r}")
        if self.r_mix is not None and not 0.0 <= self.r_mix <= 1.0:
            raise ValueError(f"r_mix must be in [0, 1], got {self.r_mix}")


@dataclass
class DetectionResult:
    """Best-cost vector found by a sampling run."""

    x_hat: np.ndarray
    best_cost: float
    cost_trace: list = field(default_factory=list)
    iterations_run: int = 0


def ml_cost(x: np.ndarray, y: np.ndarray, H: EquivChannelMatrix) -> float:
    """Squared residual ||y - Hx||^2."""
    x = np.asarray(x, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    if x.shape != y.shape or x.size != H.shape[1]:
        raise ValueError(f"dimension mismatch: x {x.shape}, y {y.shape}, H {H.shape}")
    r = y - H.matvec(x)
    return float(np.real(np.vdot(r, r)))


def ml_detect_bruteforce(y: np.ndarray, H: EquivChannelMatrix, alphabet: Alphabet) -> np.ndarray:
    """Global argmin of the ML cost over the full alphabet lattice.

    Enumerates symbol-index vectors in lexicographic order (coordinate 0
    most significant); ties keep the first vector seen.  Guarded to
    instances with at most BRUTEFORCE_BIT_BUDGET bits.
    """
    n = H.shape[1]
    if n * alphabet.bits_per_symbol > BRUTEFORCE_BIT_BUDGET:
        raise ValueError(
            f"instance of {n * alphabet.bits_per_symbol} bits exceeds the "
            f"{BRUTEFORCE_BIT_BUDGET}-bit enumeration budget"
        )
    best_x = None
    best_cost = math.inf
    for idx in itertools.product(range(len(alphabet)), repeat=n):
        x = alphabet.points[list(idx)]
        c = ml_cost(x, y, H)
        if c < best_cost:
            best_cost = c
            best_x = x
    return best_x


def _column_cache(H: EquivChannelMatrix):
    """Per-column (row indices, values, sum |values|^2) of H."""
    cols = []
    for j in range(H.shape[1]):
        idx, vals = H.column(j)
        cols.append((idx, vals, float(np.real(np.vdot(vals, vals)))))
    return cols


def _conditional_costs(e, col, x_k, points):
    """ML costs after setting coordinate k to each alphabet point.

    e is the current residual y - Hx (with x_k at its current value);
    returns costs relative to the current cost (offset is irrelevant for
    the pmf).
    """
    idx, vals, sumsq = col
    diffs = points - x_k
    # ||e - h d||^2 - ||e||^2 = -2 Re(conj(d) <e, h>*) ... expanded per support
    inner = np.vdot(e[idx], vals)  # sum conj(e_s) h_s
    return -2.0 * np.real(np.conj(diffs) * np.conj(inner)) + np.abs(diffs) ** 2 * sumsq


def _pmf_from_costs(costs, alpha_temp, sigma2):
    if math.isinf(alpha_temp):
        return np.full(len(costs), 1.0 / len(costs))
    lp = -np.asarray(costs) / (alpha_temp**2 * sigma2)
    lp -= lp.max()
    p = np.exp(lp)
    return p / p.sum()


def gibbs_conditional(
    k: int,
    x: np.ndarray,
    y: np.ndarray,
    H: EquivChannelMatrix,
    sigma2: float,
    alphabet: Alphabet,
    alpha_temp: float = 1.0,
) -> np.ndarray:
    """Conditional pmf of coordinate k given all others (incremental form)."""
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    if not (0 <= k < H.shape[1]):
        raise ValueError(f"coordinate {k} out of range [0, {H.shape[1]})")
    x = np.asarray(x, dtype=np.complex128)
    e = np.asarray(y, dtype=np.complex128) - H.matvec(x)
    idx, vals = H.column(k)
    col = (idx, vals, float(np.real(np.vdot(vals, vals))))
    costs = _conditional_costs(e, col, x[k], alphabet.points)
    return _pmf_from_costs(costs, alpha_temp, sigma2)


def gibbs_conditional_reference(
    k: int,
    x: np.ndarray,
    y: np.ndarray,
    H: EquivChannelMatrix,
    sigma2: float,
    alphabet: Alphabet,
    alpha_temp: float = 1.0,
) -> np.ndarray:
    """Conditional pmf by full cost recomputation per candidate (oracle)."""
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    x = np.array(x, dtype=np.complex128, copy=True)
    costs = []
    for a in alphabet.points:
        x[k] = a
        costs.append(ml_cost(x, y, H))
    return _pmf_from_costs(np.array(costs), alpha_temp, sigma2)


def _sample(pmf: np.ndarray, rng: np.random.Generator) -> int:
    u = rng.random()
    return int(np.searchsorted(np.cumsum(pmf), u))


def _run_sampler(y, H, sigma2, cfg, rng, alphabet, x_init):
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    n = H.shape[1]
    y = np.asarray(y, dtype=np.complex128)
    points = alphabet.points
    if x_init is None:
        x = points[rng.integers(0, len(points), size=n)]
    else:
        x = np.array(x_init, dtype=np.complex128, copy=True)
        if x.size != n:
            raise ValueError(f"initial vector length {x.size} != {n}")
    alpha_temp = cfg.alpha_temp if cfg.mode == MODE_TEMPERATURE else 1.0
    randomized = cfg.mode == MODE_RANDOMIZED

    cols = _column_cache(H)
    e = y - H.matvec(x)
    cost = float(np.real(np.vdot(e, e)))
    best_cost = cost
    best_x = x.copy()
    trace = []

    for t in range(cfg.n_iter):
        for k in range(n):
            costs = _conditional_costs(e, cols[k], x[k], points)
            if not randomized or cfg.r_mix == 0.0:
                mix = False
            elif cfg.r_mix is not None:
                mix = rng.random() < cfg.r_mix
            else:
                # the literal index-draw rule, equivalent in law to
                # Bernoulli(1/n)
                mix = rng.integers(0, n) == k
            if mix:
                pmf = rng.random(len(points))
                pmf /= pmf.sum()
            else:
                pmf = _pmf_from_costs(costs, alpha_temp, sigma2)
            j = _sample(pmf, rng)
            a = points[j]
            if a != x[k]:
                idx, vals, _ = cols[k]
                e[idx] -= vals * (a - x[k])
                x[k] = a
                cost += costs[j]
            # keep the least-cost vector seen at any point of the chain
            if cost <= best_cost:
                best_cost = cost
                best_x = x.copy()
        # refresh the residual and the running cost exactly once per sweep
        e = y - H.matvec(x)
        cost = float(np.real(np.vdot(e, e)))
        trace.append(cost)
        if cost <= best_cost:
            best_cost = cost
            best_x = x.copy()

    best_cost = ml_cost(best_x, y, H)
    return DetectionResult(x_hat=best_x, best_cost=best_cost, cost_trace=trace,
                          iterations_run=cfg.n_iter)


def gibbs_detect(
    y: np.ndarray,
    H: EquivChannelMatrix,
    sigma2: float,
    cfg: DetectorConfig,
    rng: np.random.Generator,
    alphabet: Alphabet,
    x_init: np.ndarray | None = None,
) -> DetectionResult:
    """Sequential-sweep Gibbs detection (conventional or temperature mode)."""
    if cfg.mode == MODE_RANDOMIZED:
        raise ValueError("use randomized_gibbs_detect for randomized mode")
    return _run_sampler(y, H, sigma2, cfg, rng, alphabet, x_init)


def randomized_gibbs_detect(
    y: np.ndarray,
    H: EquivChannelMatrix,
    sigma2: float,
    cfg: DetectorConfig,
    rng: np.random.Generator,
    alphabet: Alphabet,
    x_init: np.ndarray | None = None,
) -> DetectionResult:
    """Gibbs detection with the randomized update rule.

    Per coordinate k a uniform index i is drawn; when i == k (probability
    1/NM) the symbol is sampled from a random pmf built from U[0,1] draws,
    otherwise from the conventional conditional.
    """
    if cfg.mode != MODE_RANDOMIZED:
        cfg = DetectorConfig(n_iter=cfg.n_iter, alpha_temp=cfg.alpha_temp,
                             mode=MODE_RANDOMIZED, r_mix=cfg.r_mix)
    return _run_sampler(y, H, sigma2, cfg, rng, alphabet, x_init)


def detect(y, H, sigma2, cfg, rng, alphabet, x_init=None) -> DetectionResult:
    """Dispatch on cfg.mode."""
    if cfg.mode == MODE_RANDOMIZED:
        return randomized_gibbs_detect(y, H, sigma2, cfg, rng, alphabet, x_init)
    return gibbs_detect(y, H, sigma2, cfg, rng, alphabet, x_init)
