"""Quick built-in invariant checks, runnable without pytest (`otfs-sim selftest`)."""

from __future__ import annotations

import numpy as np

from . import chanest, detect, harness, transforms
from .channel import apply_channel_dd, build_H, g_factor, sample_channel
from .lattice import bpsk, make_frame_config, vectorize


def _check(name: str, ok: bool, detail: str = "") -> bool:
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}" + (f"  ({detail})" if detail else ""))
    return ok


def run_selftest() -> int:
    rng = np.random.default_rng(7)
    ok = True

    # transform round trip against the literal double sum
    x = rng.normal(size=(8, 16)) + 1j * rng.normal(size=(8, 16))
    X = transforms.isfft(x)
    err1 = np.max(np.abs(transforms.sfft(X) - x))
    err2 = np.max(np.abs(X - transforms.isfft_reference(x)))
    ok &= _check("sfft/isfft round trip", err1 < 1e-12, f"max err {err1:.2e}")
    ok &= _check("isfft matches double-sum reference", err2 < 1e-12, f"max err {err2:.2e}")

    # channel matrix vs direct evaluation
    cfg = make_frame_config(16, 8, 15e3, 4e9)
    ch = sample_channel([0, 2.1e-6, 4.2e-6], 1500.0, cfg, rng, E=4)
    f = rng.normal(size=(8, 16)) + 1j * rng.normal(size=(8, 16))
    err3 = np.max(np.abs(build_H(ch).matvec(vectorize(f)) - vectorize(apply_channel_dd(f, ch))))
    ok &= _check("H x == direct channel output", err3 < 1e-10, f"max err {err3:.2e}")

    # Doppler-spread coefficient vs literal geometric sum
    worst = 0.0
    for _ in range(200):
        q = int(rng.integers(-10, 11))
        gamma = float(rng.uniform(0.01, 0.99))
        N = int(rng.integers(2, 64))
        lit = np.mean(np.exp(-2j * np.pi * (-q - gamma) * np.arange(N) / N))
        worst = max(worst, abs(g_factor(q, gamma, N) - lit))
    ok &= _check("Doppler coefficient closed form", worst < 1e-12, f"max err {worst:.2e}")

    # m-sequence two-valued autocorrelation
    pn = chanest.gen_pn_sequence(7)
    acf = np.array([np.vdot(np.roll(pn.seq, d), pn.seq) for d in range(pn.n_p)])
    acf_ok = abs(acf[0] - 1) < 1e-12 and np.max(np.abs(acf[1:] + 1 / pn.n_p)) < 1e-12
    ok &= _check("m-sequence autocorrelation (r=7)", acf_ok)

    # detector conditional: incremental vs full recompute
    alphabet = bpsk()
    cfg2 = make_frame_config(4, 4, 15e3, 4e9)
    ch2 = sample_channel([0, 2.1e-6], 1000.0, cfg2, rng, E=2)
    H2 = build_H(ch2)
    xv = alphabet.points[rng.integers(0, 2, 16)]
    y2 = H2.matvec(xv) + 0.1 * (rng.normal(size=16) + 1j * rng.normal(size=16))
    worst_pmf = max(
        np.max(np.abs(
            detect.gibbs_conditional(k, xv, y2, H2, 0.05, alphabet)
            - detect.gibbs_conditional_reference(k, xv, y2, H2, 0.05, alphabet)
        ))
        for k in range(16)
    )
    ok &= _check("incremental conditional pmf", worst_pmf < 1e-10, f"max err {worst_pmf:.2e}")

    # end-to-end determinism
    exp = harness.ExperimentConfig(
        frame=make_frame_config(8, 8, 15e3, 4e9),
        sweep=harness.SweepParams(snr_db=(10.0,), doppler_hz=(500.0,),
                                  min_frames=8, min_bit_errors=1, max_frames=16),
        seed=3,
    )
    rec_a = harness.run_ber_sweep(exp)[0]
    rec_b = harness.run_ber_sweep(exp)[0]
    ok &= _check("seeded determinism", (rec_a.bit_errors, rec_a.bits) == (rec_b.bit_errors, rec_b.bits))

    print("selftest:", "all checks passed" if ok else "FAILURES above")
    return 0 if ok else 1
