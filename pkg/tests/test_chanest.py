"""PN pilots, matched-filter shift estimation, and channel reconstruction."""

import numpy as np
import pytest

from otfs_sim.channel import ChannelRealization, build_H, make_integer_tap, sample_channel
from otfs_sim.chanest import (
    PRIMITIVE_TAPS,
    DiscretePilotModel,
    PilotPath,
    default_peak_threshold,
    detect_peaks,
    discretize_channel,
    estimate_channel,
    estimation_error,
    gen_pn_sequence,
    matched_filter_matrix,
    matched_filter_matrix_reference,
    params_to_channel,
    pilot_snr_to_sigma2,
    simulate_pilot_rx,
)
from otfs_sim.lattice import make_frame_config

CFG = make_frame_config(32, 32, 15e3, 4e9)


def _circular_acf(seq):
    n = len(seq)
    return np.array([np.dot(seq, np.roll(seq, k)) for k in range(n)])


def _single_path_model(gain, delta, omega, n_p, K=None):
    K = delta if K is None else K
    return DiscretePilotModel(
        paths=(PilotPath(gain=gain, delta=delta, omega=omega),), n_p=n_p, K=K, W=n_p
    )


class TestPnSequence:
    def test_lengths(self):
        for r in (2, 5, 7, 10):
            assert gen_pn_sequence(r).n_p == 2**r - 1

    def test_unit_norm(self):
        for r in (3, 7, 10):
            s = gen_pn_sequence(r)
            assert np.sum(s.seq**2) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("r", sorted(PRIMITIVE_TAPS))
    def test_two_valued_autocorrelation(self, r):
        # the defining property of a maximal-length sequence
        s = gen_pn_sequence(r)
        acf = _circular_acf(s.seq * np.sqrt(s.n_p))
        assert acf[0] == pytest.approx(s.n_p)
        assert np.allclose(acf[1:], -1.0, atol=1e-9)

    def test_balanced(self):
        # one more +1 than -1 in every maximal-length period
        # m-sequences carry 2^(r-1) ones, so the bipolar sum is -1
        s = gen_pn_sequence(7)
        signs = np.sign(s.seq)
        assert int(signs.sum()) == -1

    def test_deterministic(self):
        a, b = gen_pn_sequence(8), gen_pn_sequence(8)
        assert np.array_equal(a.seq, b.seq)

    def test_unsupported_degree(self):
        with pytest.raises(ValueError):
            gen_pn_sequence(1)
        with pytest.raises(ValueError):
            gen_pn_sequence(17)


class TestPilotRx:
    def test_identity_path(self):
        s = gen_pn_sequence(5)
        model = _single_path_model(1.0, 0, 0, s.n_p)
        assert np.allclose(simulate_pilot_rx(s, model, 0.0), s.seq, atol=1e-12)

    def test_pure_shift_and_ramp(self):
        s = gen_pn_sequence(7)
        n = np.arange(s.n_p)
        model = _single_path_model(1.0, 40, 90, s.n_p)
        expect = np.exp(2j * np.pi * 90 * n / s.n_p) * np.roll(s.seq, 40)
        assert np.allclose(simulate_pilot_rx(s, model, 0.0), expect, atol=1e-12)

    def test_linearity_in_paths(self):
        s = gen_pn_sequence(6)
        p1 = _single_path_model(0.7 + 0.1j, 3, 5, s.n_p, K=7)
        p2 = _single_path_model(-0.2 + 0.9j, 7, 11, s.n_p, K=7)
        both = DiscretePilotModel(paths=p1.paths + p2.paths, n_p=s.n_p, K=7, W=s.n_p)
        r = simulate_pilot_rx(s, both, 0.0)
        assert np.allclose(
            r, simulate_pilot_rx(s, p1, 0.0) + simulate_pilot_rx(s, p2, 0.0), atol=1e-12
        )

    def test_noise_requires_rng(self):
        s = gen_pn_sequence(4)
        model = _single_path_model(1.0, 0, 0, s.n_p)
        with pytest.raises(ValueError):
            simulate_pilot_rx(s, model, 0.1)

    def test_length_mismatch(self):
        s = gen_pn_sequence(4)
        model = _single_path_model(1.0, 0, 0, 31)
        with pytest.raises(ValueError):
            simulate_pilot_rx(s, model, 0.0)

    def test_pilot_snr_convention(self):
        s = gen_pn_sequence(7)
        model = _single_path_model(1.0, 0, 0, s.n_p)
        # unit gain: mean sample power 1/N_p; at 0 dB sigma2 equals it
        assert pilot_snr_to_sigma2(0.0, model) == pytest.approx(1.0 / s.n_p)
        assert pilot_snr_to_sigma2(10.0, model) == pytest.approx(0.1 / s.n_p)


class TestMatchedFilter:
    @pytest.mark.parametrize("r", [2, 3, 4])
    def test_matches_literal_reference(self, r):
        s = gen_pn_sequence(r)
        rng = np.random.default_rng(r)
        R = rng.normal(size=s.n_p) + 1j * rng.normal(size=s.n_p)
        fast = matched_filter_matrix(R, s)
        ref = matched_filter_matrix_reference(R, s)
        assert np.max(np.abs(fast - ref)) < 1e-10

    def test_noiseless_single_path_peak_exact(self):
        s = gen_pn_sequence(7)
        gain = 0.8 - 0.3j
        for delta, omega in [(40, 90), (80, 60), (0, 0), (126, 1)]:
            model = _single_path_model(gain, delta, omega, s.n_p)
            MF = matched_filter_matrix(simulate_pilot_rx(s, model, 0.0), s)
            assert abs(MF[delta, omega] - gain) < 1e-12
            peak = detect_peaks(MF, P=1)[0]
            assert (peak[0], peak[1]) == (delta, omega)

    def test_off_peak_sidelobes_bounded_noiseless(self):
        # two-valued pilot correlation keeps noiseless sidelobes near 1/N_p
        s = gen_pn_sequence(7)
        model = _single_path_model(1.0, 40, 90, s.n_p)
        MF = matched_filter_matrix(simulate_pilot_rx(s, model, 0.0), s)
        mags = np.abs(MF)
        mags[40, 90] = 0.0
        assert mags.max() < 0.15

    def test_two_path_peaks(self):
        s = gen_pn_sequence(7)
        model = DiscretePilotModel(
            paths=(PilotPath(1.0, 10, 20), PilotPath(0.9j, 50, 100)),
            n_p=s.n_p, K=50, W=s.n_p,
        )
        MF = matched_filter_matrix(simulate_pilot_rx(s, model, 0.0), s)
        found = {(d, o) for d, o, _ in detect_peaks(MF, P=2)}
        assert found == {(10, 20), (50, 100)}

    def test_peak_tie_break_lexicographic(self):
        MF = np.zeros((4, 4), dtype=complex)
        MF[2, 3] = 1.0
        MF[1, 1] = 1.0
        peaks = detect_peaks(MF, P=2)
        assert [(p[0], p[1]) for p in peaks] == [(1, 1), (2, 3)]

    def test_threshold_mode(self):
        s = gen_pn_sequence(5)
        model = _single_path_model(1.0, 3, 7, s.n_p)
        MF = matched_filter_matrix(simulate_pilot_rx(s, model, 0.0), s)
        peaks = detect_peaks(MF, threshold=default_peak_threshold(s.n_p))
        assert (peaks[0][0], peaks[0][1]) == (3, 7)

    def test_peak_args_validation(self):
        MF = np.zeros((3, 3), dtype=complex)
        with pytest.raises(ValueError):
            detect_peaks(MF)
        with pytest.raises(ValueError):
            detect_peaks(MF, P=0)


def _table_iii_integer_channel(rng, cfg=CFG, P=5):
    delays = [0.0, 2.1e-6, 4.2e-6, 6.3e-6, 8.4e-6][:P]
    dopplers = [0.0, 470.0, 940.0, 1410.0, 1880.0][:P]
    taps = []
    for tau, nu in zip(delays, dopplers):
        h = (rng.normal() + 1j * rng.normal()) / np.sqrt(2 * P)
        alpha = int(round(tau * cfg.M * cfg.delta_f))
        beta = int(round(nu * cfg.N * cfg.T))
        taps.append(make_integer_tap(h, alpha, beta, cfg))
    return ChannelRealization(taps=tuple(taps), E=0, cfg=cfg)


class TestDiscretization:
    def test_dd_mode_maps_lattice_taps(self):
        rng = np.random.default_rng(0)
        ch = _table_iii_integer_channel(rng)
        model = discretize_channel(ch, W=CFG.M * CFG.delta_f, n_p=127, mode="dd")
        assert [p.delta for p in model.paths] == [t.alpha for t in ch.taps]
        assert [p.omega for p in model.paths] == [t.beta for t in ch.taps]
        assert model.K == max(t.alpha for t in ch.taps)

    def test_dd_mode_rejects_fractional(self):
        rng = np.random.default_rng(1)
        ch = sample_channel([0.0, 2.1e-6], 800.0, CFG, rng)
        with pytest.raises(ValueError):
            discretize_channel(ch, W=CFG.M * CFG.delta_f, n_p=127, mode="dd")

    def test_physical_mode_delay_samples(self):
        # 2.1 us at W = 480 kHz is one sample; Table-III-style spacing
        rng = np.random.default_rng(2)
        ch = _table_iii_integer_channel(rng)
        model = discretize_channel(ch, W=CFG.M * CFG.delta_f, n_p=1023, mode="physical")
        assert [p.delta for p in model.paths] == [0, 1, 2, 3, 4]

    def test_gain_carries_guard_phase(self):
        rng = np.random.default_rng(3)
        ch = _table_iii_integer_channel(rng)
        model = discretize_channel(ch, W=CFG.M * CFG.delta_f, n_p=127, mode="dd")
        for tap, p in zip(ch.taps, model.paths):
            expect = tap.h_prime * np.exp(2j * np.pi * p.omega * model.K / 127)
            assert abs(p.gain - expect) < 1e-12

    def test_unknown_mode(self):
        rng = np.random.default_rng(4)
        ch = _table_iii_integer_channel(rng)
        with pytest.raises(ValueError):
            discretize_channel(ch, W=1.0, n_p=127, mode="cyclic")


class TestRoundTrip:
    @pytest.mark.parametrize("r,rel_bound", [(7, 0.5), (10, 0.05)])
    def test_noiseless_dd_round_trip(self, r, rel_bound):
        # shift locations are recovered exactly; gains carry pilot
        # cross-correlation leakage that shrinks with the pilot length
        s = gen_pn_sequence(r)
        rng = np.random.default_rng(10 + r)
        ch = _table_iii_integer_channel(rng)
        model = discretize_channel(ch, W=CFG.M * CFG.delta_f, n_p=s.n_p, mode="dd")
        R = simulate_pilot_rx(s, model, 0.0)
        ch_hat, H_e = estimate_channel(R, s, model, P=ch.P, cfg=CFG, mode="dd")
        H = build_H(ch)
        got = {(t.alpha, t.beta) for t in ch_hat.taps}
        want = {(t.alpha, t.beta) for t in ch.taps}
        assert got == want
        rel = estimation_error(H, H_e) / np.sqrt(np.sum(np.abs(H.toarray()) ** 2))
        assert rel < rel_bound

    def test_noiseless_physical_round_trip(self):
        # physical mapping: recoverable delays, Dopplers collapse onto the
        # coarse W/N_p grid and re-quantize to the frame lattice
        s = gen_pn_sequence(10)
        rng = np.random.default_rng(20)
        ch = _table_iii_integer_channel(rng)
        W = CFG.M * CFG.delta_f
        model = discretize_channel(ch, W=W, n_p=s.n_p, mode="physical")
        R = simulate_pilot_rx(s, model, 0.0)
        ch_hat, _ = estimate_channel(R, s, model, P=ch.P, cfg=CFG, mode="physical")
        assert sorted(t.alpha for t in ch_hat.taps) == [0, 1, 2, 3, 4]

    def test_single_path_gain_inversion_exact(self):
        # with one path there is no cross-correlation leakage at all
        s = gen_pn_sequence(7)
        rng = np.random.default_rng(30)
        ch = _table_iii_integer_channel(rng, P=1)
        model = discretize_channel(ch, W=CFG.M * CFG.delta_f, n_p=s.n_p, mode="dd")
        R = simulate_pilot_rx(s, model, 0.0)
        ch_hat, _ = estimate_channel(R, s, model, P=1, cfg=CFG, mode="dd")
        assert abs(ch_hat.taps[0].h_prime - ch.taps[0].h_prime) < 1e-12

    def test_multipath_gain_leakage_bounded(self):
        s = gen_pn_sequence(10)
        rng = np.random.default_rng(30)
        ch = _table_iii_integer_channel(rng)
        model = discretize_channel(ch, W=CFG.M * CFG.delta_f, n_p=s.n_p, mode="dd")
        R = simulate_pilot_rx(s, model, 0.0)
        ch_hat, _ = estimate_channel(R, s, model, P=ch.P, cfg=CFG, mode="dd")
        want = {(t.alpha, t.beta): t.h_prime for t in ch.taps}
        bound = 2.0 * (ch.P - 1) / np.sqrt(s.n_p)
        for t in ch_hat.taps:
            assert abs(t.h_prime - want[(t.alpha, t.beta)]) < bound


class TestEstimationError:
    def test_zero_for_identical(self):
        rng = np.random.default_rng(40)
        ch = _table_iii_integer_channel(rng)
        H = build_H(ch)
        assert estimation_error(H, H) == 0.0

    def test_noise_floor_scales_with_pilot_length(self):
        # mean Frobenius error shrinks roughly like 1/sqrt(N_p)
        errs = {}
        for r in (5, 7, 10):
            s = gen_pn_sequence(r)
            per_draw = []
            for draw in range(20):
                rng = np.random.default_rng([r, draw])
                ch = _table_iii_integer_channel(rng)
                model = discretize_channel(ch, W=CFG.M * CFG.delta_f, n_p=s.n_p, mode="dd")
                sigma2 = pilot_snr_to_sigma2(10.0, model)
                R = simulate_pilot_rx(s, model, sigma2, rng)
                ch_hat, H_e = estimate_channel(R, s, model, P=ch.P, cfg=CFG, mode="dd")
                per_draw.append(estimation_error(build_H(ch), H_e))
            errs[r] = np.mean(per_draw)
        assert errs[5] > errs[7] > errs[10]
        assert 1.5 < errs[5] / errs[10] < 15.0

    def test_error_decreases_with_pilot_snr(self):
        s = gen_pn_sequence(7)
        means = []
        for snr in (0.0, 10.0, 20.0):
            per_draw = []
            for draw in range(20):
                rng = np.random.default_rng([50, draw])
                ch = _table_iii_integer_channel(rng)
                model = discretize_channel(ch, W=CFG.M * CFG.delta_f, n_p=s.n_p, mode="dd")
                sigma2 = pilot_snr_to_sigma2(snr, model)
                R = simulate_pilot_rx(s, model, sigma2, rng)
                ch_hat, H_e = estimate_channel(R, s, model, P=ch.P, cfg=CFG, mode="dd")
                per_draw.append(estimation_error(build_H(ch), H_e))
            means.append(np.mean(per_draw))
        assert means[0] > means[1] > means[2]


def test_params_to_channel_negative_doppler():
    # omega in the upper half of the grid folds to a negative shift and a
    # valid frame tap
    model = DiscretePilotModel(
        paths=(PilotPath(1.0, 1, 126),), n_p=127, K=1, W=127.0
    )
    ch = params_to_channel([(1, 126, 1.0 + 0j)], model, CFG, mode="dd")
    assert ch.taps[0].alpha == 1
    assert ch.taps[0].beta == (-1) % CFG.N


def test_dump_mf_csv(tmp_path):
    s = gen_pn_sequence(3)
    model = _single_path_model(1.0, 2, 3, s.n_p)
    MF = matched_filter_matrix(simulate_pilot_rx(s, model, 0.0), s)
    from otfs_sim.chanest import dump_mf_csv
    path = tmp_path / "mf.csv"
    dump_mf_csv(MF, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "delta,omega,abs,re,im"
    assert len(lines) == 1 + s.n_p**2
