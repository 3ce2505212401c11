"""Experiment orchestration: seeded Monte-Carlo BER and estimation sweeps.

Every frame owns an RNG stream derived from (master seed, stream id,
frame index), so results are bit-identical for any worker count and any
execution order.  Stopping decisions are made on fixed-size batch
boundaries for the same reason.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import chanest, detect as detect_mod
from .channel import (
    ChannelRealization,
    add_awgn,
    apply_channel_dd,
    build_H,
    make_integer_tap,
    make_tap,
    sample_channel,
    snr_to_sigma2,
)
from .lattice import (
    Alphabet,
    FrameConfig,
    bpsk,
    demap_symbols,
    devectorize,
    map_bits,
    qam4,
    vectorize,
)

SPEED_OF_LIGHT = 2.99792458e8
BATCH_FRAMES = 16

CSV_HEADER = [
    "snr_db", "doppler_hz", "detector", "csi", "n_p", "frames", "bits",
    "bit_errors", "ber", "h_err_f_mean", "wall_s", "seed", "converged",
]

EST_ERROR_CSV_HEADER = ["pilot_snr_db", "n_p", "draws", "h_err_f_mean", "seed"]

# 5-tap uniform-power delay profiles used by the reference experiments (us).
DELAY_PROFILE_5TAP_US = (0.0, 2.1, 4.2, 6.3, 8.4)
DELAY_DOPPLER_PROFILE_5TAP = (
    (2.1e-6, 0.0),
    (4.2e-6, 470.0),
    (6.3e-6, 940.0),
    (8.4e-6, 1410.0),
    (10.4e-6, 1880.0),
)


def ue_speed_to_doppler(speed_kmph: float, carrier_hz: float) -> float:
    """Maximum Doppler shift v * f_c / c."""
    return speed_kmph / 3.6 * carrier_hz / SPEED_OF_LIGHT


@dataclass(frozen=True)
class ChannelParams:
    """Channel-draw settings for one experiment."""

    delay_profile_us: tuple = DELAY_PROFILE_5TAP_US
    doppler_model: str = "jakes"        # "jakes" or "fixed"
    doppler_profile_hz: tuple = ()      # per-tap Dopplers for "fixed"
    E: int = 4
    integer_doppler: bool = False

    def __post_init__(self):
        if self.doppler_model not in ("jakes", "fixed"):
            raise ValueError(f"unknown doppler model {self.doppler_model!r}")
        if self.doppler_model == "fixed" and len(self.doppler_profile_hz) != len(self.delay_profile_us):
            raise ValueError("fixed doppler profile must match the delay profile length")

    @property
    def P(self) -> int:
        return len(self.delay_profile_us)


@dataclass(frozen=True)
class DetectorParams:
    mode: str = "randomized"
    n_iter: int = 3
    alpha_temp: float = 1.0


@dataclass(frozen=True)
class SweepParams:
    snr_db: tuple = (9.0, 11.0, 13.0)
    doppler_hz: tuple = (1851.0,)       # jakes nu_max values to sweep
    min_frames: int = 200
    min_bit_errors: int = 100
    max_frames: int = 100_000

    def __post_init__(self):
        if list(self.snr_db) != sorted(self.snr_db):
            raise ValueError("SNR list must be strictly increasing")
        if len(set(self.snr_db)) != len(self.snr_db):
            raise ValueError("SNR list must be strictly increasing")


@dataclass(frozen=True)
class EstimationParams:
    enabled: bool = False
    r_list: tuple = (10,)               # pilot lengths N_p = 2^r - 1
    pilot_snr_db: tuple = (10.0,)
    pilot_snr_mode: str = "track"       # "track" data SNR or "fixed"
    mapping: str = "dd"                 # "dd" or "physical" pilot mapping
    draws: int = 100                    # channel draws for est-error sweeps
    perfect_injection: bool = False     # debug hook: report H_e := H

    def __post_init__(self):
        if self.pilot_snr_mode not in ("track", "fixed"):
            raise ValueError(f"unknown pilot SNR mode {self.pilot_snr_mode!r}")
        if self.mapping not in ("dd", "physical"):
            raise ValueError(f"unknown pilot mapping {self.mapping!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    frame: FrameConfig = field(default_factory=lambda: FrameConfig(128, 32, 3750.0, 4e9))
    channel: ChannelParams = field(default_factory=ChannelParams)
    detector: DetectorParams = field(default_factory=DetectorParams)
    sweep: SweepParams = field(default_factory=SweepParams)
    estimation: EstimationParams = field(default_factory=EstimationParams)
    modulation: str = "bpsk"
    seed: int = 0
    threads: int = 1
    out_path: str = "records.csv"

    def alphabet(self) -> Alphabet:
        if self.modulation == "bpsk":
            return bpsk()
        if self.modulation == "qam4":
            return qam4()
        raise ValueError(f"unknown modulation {self.modulation!r}")


@dataclass
class BerRecord:
    snr_db: float
    doppler_hz: float
    detector: str
    csi: str
    n_p: int
    frames: int
    bits: int
    bit_errors: int
    ber: float
    h_err_f_mean: float
    wall_s: float
    seed: int
    converged: bool


@dataclass
class EstErrorRecord:
    pilot_snr_db: float
    n_p: int
    draws: int
    h_err_f_mean: float
    seed: int


def derive_frame_rng(master_seed: int, stream_id: int, frame_idx: int) -> np.random.Generator:
    """Independent, reproducible per-frame RNG stream."""
    return np.random.default_rng([master_seed, stream_id, frame_idx])


def draw_channel(params: ChannelParams, cfg: FrameConfig, nu_max: float,
                 rng: np.random.Generator) -> ChannelRealization:
    """One channel realization according to the experiment's channel model."""
    delays = [d * 1e-6 for d in params.delay_profile_us]
    if params.doppler_model == "jakes":
        return sample_channel(delays, nu_max, cfg, rng, E=params.E,
                              integer_doppler=params.integer_doppler)
    # fixed per-tap Dopplers; gains still CN(0, 1/P)
    P = params.P
    scale = np.sqrt(1.0 / (2 * P))
    gains = rng.normal(scale=scale, size=P) + 1j * rng.normal(scale=scale, size=P)
    taps = []
    for h, tau, nu in zip(gains, delays, params.doppler_profile_hz):
        if params.integer_doppler:
            alpha = int(round(tau * cfg.M * cfg.delta_f)) % cfg.M
            beta = int(round(nu * cfg.N * cfg.T)) % cfg.N
            taps.append(make_integer_tap(h, alpha, beta, cfg))
        else:
            taps.append(make_tap(h, tau, nu, cfg))
    return ChannelRealization(taps=tuple(taps), E=params.E, cfg=cfg)


def _pilot_sigma2(est: EstimationParams, model, data_snr_db: float, pilot_snr_db: float) -> float:
    snr = data_snr_db if est.pilot_snr_mode == "track" else pilot_snr_db
    return chanest.pilot_snr_to_sigma2(snr, model)


def _simulate_frame(exp: ExperimentConfig, snr_db: float, nu_max: float,
                    stream_id: int, frame_idx: int, estimated_csi: bool,
                    r: int = 0, pilot_snr_db: float = 0.0):
    """One end-to-end frame; returns (bits, bit_errors, h_err or nan)."""
    rng = derive_frame_rng(exp.seed, stream_id, frame_idx)
    cfg = exp.frame
    alphabet = exp.alphabet()
    ch = draw_channel(exp.channel, cfg, nu_max, rng)
    H = build_H(ch)

    n_bits = cfg.n_symbols * alphabet.bits_per_symbol
    bits = rng.integers(0, 2, size=n_bits)
    x = map_bits(bits, alphabet, cfg)
    sigma2 = snr_to_sigma2(snr_db)
    y = vectorize(add_awgn(apply_channel_dd(x, ch), sigma2, rng))

    h_err = float("nan")
    H_rx = H
    if estimated_csi:
        pilot = chanest.gen_pn_sequence(r)
        W = cfg.M * cfg.delta_f
        model = chanest.discretize_channel(ch, W, pilot.n_p, mode=exp.estimation.mapping)
        p_sigma2 = _pilot_sigma2(exp.estimation, model, snr_db, pilot_snr_db)
        R = chanest.simulate_pilot_rx(pilot, model, p_sigma2, rng)
        _, H_rx = chanest.estimate_channel(R, pilot, model, ch.P, cfg,
                                           mode=exp.estimation.mapping, E=exp.channel.E)
        h_err = chanest.estimation_error(H, H_rx)

    dcfg = detect_mod.DetectorConfig(
        n_iter=exp.detector.n_iter,
        alpha_temp=exp.detector.alpha_temp,
        mode=exp.detector.mode,
    )
    result = detect_mod.detect(y, H_rx, sigma2, dcfg, rng, alphabet)
    bits_hat = demap_symbols(devectorize(result.x_hat, cfg.N, cfg.M), alphabet)
    errors = int(np.count_nonzero(bits_hat != bits))
    return n_bits, errors, h_err


def _frame_worker(payload):
    return _simulate_frame(*payload)


def _run_point(exp: ExperimentConfig, snr_db: float, nu_max: float, stream_id: int,
               estimated_csi: bool, r: int, pilot_snr_db: float,
               executor) -> BerRecord:
    sweep = exp.sweep
    frames = bits = errors = 0
    h_errs = []
    t0 = time.perf_counter()
    while True:
        batch_size = min(BATCH_FRAMES, sweep.max_frames - frames)
        batch = [
            (exp, snr_db, nu_max, stream_id, frames + i, estimated_csi, r, pilot_snr_db)
            for i in range(batch_size)
        ]
        if executor is None:
            results = [_frame_worker(p) for p in batch]
        else:
            results = list(executor.map(_frame_worker, batch))
        for n_bits, n_err, h_err in results:
            frames += 1
            bits += n_bits
            errors += n_err
            if estimated_csi:
                h_errs.append(h_err)
        done_enough = frames >= sweep.min_frames and errors >= sweep.min_bit_errors
        if done_enough or frames >= sweep.max_frames:
            break
    wall = time.perf_counter() - t0
    n_p = 2**r - 1 if estimated_csi else 0
    return BerRecord(
        snr_db=snr_db,
        doppler_hz=nu_max,
        detector=exp.detector.mode,
        csi="estimated" if estimated_csi else "perfect",
        n_p=n_p,
        frames=frames,
        bits=bits,
        bit_errors=errors,
        ber=errors / bits,
        h_err_f_mean=float(np.mean(h_errs)) if h_errs else float("nan"),
        wall_s=wall,
        seed=exp.seed,
        converged=errors >= sweep.min_bit_errors,
    )


def _with_executor(exp: ExperimentConfig, fn):
    if exp.threads > 1:
        with ProcessPoolExecutor(max_workers=exp.threads) as ex:
            return fn(ex)
    return fn(None)


def run_ber_sweep(exp: ExperimentConfig) -> list[BerRecord]:
    """Perfect-CSI BER over the configured (Doppler, SNR) grid."""

    def go(executor):
        records = []
        stream_id = 0
        for nu_max in exp.sweep.doppler_hz:
            for snr_db in exp.sweep.snr_db:
                records.append(_run_point(exp, snr_db, nu_max, stream_id,
                                          False, 0, 0.0, executor))
                stream_id += 1
        return records

    return _with_executor(exp, go)


def run_estimated_csi_sweep(exp: ExperimentConfig) -> list[BerRecord]:
    """Estimated-CSI BER (pilot -> matched filter -> H_e -> detection).

    Also runs the matching perfect-CSI baseline so the SNR penalty can be
    read off one record set.  Requires an integer-Doppler channel model.
    """
    if not exp.estimation.enabled:
        raise ValueError("estimation is not enabled in this configuration")
    if not exp.channel.integer_doppler:
        raise ValueError("estimated-CSI sweeps require an integer-Doppler channel")

    def go(executor):
        records = []
        nu_max = max(exp.channel.doppler_profile_hz) if exp.channel.doppler_model == "fixed" \
            else exp.sweep.doppler_hz[0]
        stream_id = 10_000
        for snr_db in exp.sweep.snr_db:
            records.append(_run_point(exp, snr_db, nu_max, stream_id,
                                      False, 0, 0.0, executor))
            stream_id += 1
        for r in exp.estimation.r_list:
            for snr_db in exp.sweep.snr_db:
                pilot_snr = exp.estimation.pilot_snr_db[0]
                records.append(_run_point(exp, snr_db, nu_max, stream_id,
                                          True, r, pilot_snr, executor))
                stream_id += 1
        return records

    return _with_executor(exp, go)


def _estimation_error_draw(payload):
    exp, r, pilot_snr_db, stream_id, draw_idx = payload
    rng = derive_frame_rng(exp.seed, stream_id, draw_idx)
    cfg = exp.frame
    nu_max = max(exp.channel.doppler_profile_hz, default=0.0)
    ch = draw_channel(exp.channel, cfg, nu_max, rng)
    H = build_H(ch)
    if exp.estimation.perfect_injection:
        return chanest.estimation_error(H, H)
    pilot = chanest.gen_pn_sequence(r)
    W = cfg.M * cfg.delta_f
    model = chanest.discretize_channel(ch, W, pilot.n_p, mode=exp.estimation.mapping)
    sigma2 = chanest.pilot_snr_to_sigma2(pilot_snr_db, model)
    R = chanest.simulate_pilot_rx(pilot, model, sigma2, rng)
    _, H_e = chanest.estimate_channel(R, pilot, model, ch.P, cfg,
                                      mode=exp.estimation.mapping, E=exp.channel.E)
    return chanest.estimation_error(H, H_e)


def run_estimation_error_sweep(exp: ExperimentConfig) -> list[EstErrorRecord]:
    """Mean ||H - H_e||_F over channel draws for each (pilot SNR, N_p)."""
    if not exp.estimation.enabled:
        raise ValueError("estimation is not enabled in this configuration")

    def go(executor):
        records = []
        stream_id = 20_000
        for r in exp.estimation.r_list:
            for pilot_snr in exp.estimation.pilot_snr_db:
                payloads = [(exp, r, pilot_snr, stream_id, i)
                            for i in range(exp.estimation.draws)]
                if executor is None:
                    errs = [_estimation_error_draw(p) for p in payloads]
                else:
                    errs = list(executor.map(_estimation_error_draw, payloads))
                records.append(EstErrorRecord(
                    pilot_snr_db=pilot_snr,
                    n_p=2**r - 1,
                    draws=exp.estimation.draws,
                    h_err_f_mean=float(np.mean(errs)),
                    seed=exp.seed,
                ))
                stream_id += 1
        return records

    return _with_executor(exp, go)


def emit_csv(records, path) -> None:
    """Write BER or estimation-error records with the fixed header."""
    if not records:
        raise ValueError("refusing to write an empty record set")
    import csv as _csv

    with open(path, "w", newline="") as f:
        w = _csv.writer(f)
        if isinstance(records[0], BerRecord):
            w.writerow(CSV_HEADER)
            for rec in records:
                if rec.frames == 0:
                    raise ValueError("refusing to write a record with 0 frames")
                w.writerow([
                    f"{rec.snr_db:g}", f"{rec.doppler_hz:g}", rec.detector, rec.csi,
                    rec.n_p, rec.frames, rec.bits, rec.bit_errors,
                    f"{rec.ber:.6e}", f"{rec.h_err_f_mean:.6e}", f"{rec.wall_s:.3f}",
                    rec.seed, int(rec.converged),
                ])
        else:
            w.writerow(EST_ERROR_CSV_HEADER)
            for rec in records:
                if rec.draws == 0:
                    raise ValueError("refusing to write a record with 0 draws")
                w.writerow([
                    f"{rec.pilot_snr_db:g}", rec.n_p, rec.draws,
                    f"{rec.h_err_f_mean:.6e}", rec.seed,
                ])


# --------------------------------------------------------------------------
# Configuration file grammar: "[section]" headers and "key = value" lines.
# Unknown sections and keys are hard errors.
# --------------------------------------------------------------------------

_SCHEMA = {
    "frame": {"m": int, "n": int, "delta_f_hz": float, "carrier_hz": float},
    "channel": {
        "delay_profile_us": "floats",
        "doppler_model": str,
        "doppler_profile_hz": "floats",
        "e": int,
        "integer_doppler": "bool",
    },
    "detector": {"mode": str, "n_iter": int, "alpha_temp": float},
    "sweep": {
        "snr_db": "floats",
        "doppler_hz": "floats",
        "min_frames": int,
        "min_bit_errors": int,
        "max_frames": int,
    },
    "estimation": {
        "enabled": "bool",
        "r_list": "ints",
        "pilot_snr_db": "floats",
        "pilot_snr_mode": str,
        "mapping": str,
        "draws": int,
    },
    "run": {"modulation": str, "seed": int, "threads": int, "out": str},
}


class ConfigError(ValueError):
    pass


def _parse_value(kind, raw: str, lineno: int):
    try:
        if kind == "floats":
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if kind == "ints":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if kind == "bool":
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value {raw!r}: {exc}") from exc


def parse_config_text(text: str) -> ExperimentConfig:
    values: dict[str, dict] = {s: {} for s in _SCHEMA}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside of any [section]")
        key, raw = (p.strip() for p in stripped.split("=", 1))
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in section [{section}]")
        values[section][key] = _parse_value(_SCHEMA[section][key], raw, lineno)

    f = values["frame"]
    frame = FrameConfig(
        M=f.get("m", 128), N=f.get("n", 32),
        delta_f=f.get("delta_f_hz", 3750.0), carrier_hz=f.get("carrier_hz", 4e9),
    )
    c = values["channel"]
    channel = ChannelParams(
        delay_profile_us=c.get("delay_profile_us", DELAY_PROFILE_5TAP_US),
        doppler_model=c.get("doppler_model", "jakes"),
        doppler_profile_hz=c.get("doppler_profile_hz", ()),
        E=c.get("e", 4),
        integer_doppler=c.get("integer_doppler", False),
    )
    d = values["detector"]
    detector = DetectorParams(
        mode=d.get("mode", "randomized"),
        n_iter=d.get("n_iter", 3),
        alpha_temp=d.get("alpha_temp", 1.0),
    )
    s = values["sweep"]
    sweep = SweepParams(
        snr_db=s.get("snr_db", (9.0, 11.0, 13.0)),
        doppler_hz=s.get("doppler_hz", (1851.0,)),
        min_frames=s.get("min_frames", 200),
        min_bit_errors=s.get("min_bit_errors", 100),
        max_frames=s.get("max_frames", 100_000),
    )
    e = values["estimation"]
    estimation = EstimationParams(
        enabled=e.get("enabled", False),
        r_list=e.get("r_list", (10,)),
        pilot_snr_db=e.get("pilot_snr_db", (10.0,)),
        pilot_snr_mode=e.get("pilot_snr_mode", "track"),
        mapping=e.get("mapping", "dd"),
        draws=e.get("draws", 100),
    )
    r = values["run"]
    return ExperimentConfig(
        frame=frame, channel=channel, detector=detector, sweep=sweep,
        estimation=estimation,
        modulation=r.get("modulation", "bpsk"),
        seed=r.get("seed", 0),
        threads=r.get("threads", 1),
        out_path=r.get("out", "records.csv"),
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


def dump_config_text(exp: ExperimentConfig) -> str:
    """Serialize a config so that parse(dump(cfg)) == cfg."""

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, tuple):
            return ", ".join(f"{x:g}" if isinstance(x, float) else str(x) for x in v)
        if isinstance(v, float):
            return f"{v:g}"
        return str(v)

    lines = [
        "[frame]",
        f"m = {exp.frame.M}",
        f"n = {exp.frame.N}",
        f"delta_f_hz = {fmt(exp.frame.delta_f)}",
        f"carrier_hz = {fmt(exp.frame.carrier_hz)}",
        "",
        "[channel]",
        f"delay_profile_us = {fmt(tuple(float(x) for x in exp.channel.delay_profile_us))}",
        f"doppler_model = {exp.channel.doppler_model}",
        f"e = {exp.channel.E}",
        f"integer_doppler = {fmt(exp.channel.integer_doppler)}",
    ]
    if exp.channel.doppler_profile_hz:
        lines.append(f"doppler_profile_hz = {fmt(tuple(float(x) for x in exp.channel.doppler_profile_hz))}")
    lines += [
        "",
        "[detector]",
        f"mode = {exp.detector.mode}",
        f"n_iter = {exp.detector.n_iter}",
        f"alpha_temp = {fmt(exp.detector.alpha_temp)}",
        "",
        "[sweep]",
        f"snr_db = {fmt(tuple(float(x) for x in exp.sweep.snr_db))}",
        f"doppler_hz = {fmt(tuple(float(x) for x in exp.sweep.doppler_hz))}",
        f"min_frames = {exp.sweep.min_frames}",
        f"min_bit_errors = {exp.sweep.min_bit_errors}",
        f"max_frames = {exp.sweep.max_frames}",
        "",
        "[estimation]",
        f"enabled = {fmt(exp.estimation.enabled)}",
        f"r_list = {fmt(exp.estimation.r_list)}",
        f"pilot_snr_db = {fmt(tuple(float(x) for x in exp.estimation.pilot_snr_db))}",
        f"pilot_snr_mode = {exp.estimation.pilot_snr_mode}",
        f"mapping = {exp.estimation.mapping}",
        f"draws = {exp.estimation.draws}",
        "",
        "[run]",
        f"modulation = {exp.modulation}",
        f"seed = {exp.seed}",
        f"threads = {exp.threads}",
        f"out = {exp.out_path}",
        "",
    ]
    return "\n".join(lines)


def save_config(exp: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_config_text(exp))
