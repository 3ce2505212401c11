"""Link-level OTFS simulator: delay-Doppler channels, MCMC-sampling
detection, and PN-pilot channel estimation."""

from .lattice import (
    Alphabet,
    FrameConfig,
    bpsk,
    demap_symbols,
    devectorize,
    make_frame_config,
    map_bits,
    qam4,
    vec_index,
    vectorize,
)
from .transforms import isfft, sfft
from .channel import (
    ChannelRealization,
    ChannelTap,
    EquivChannelMatrix,
    add_awgn,
    apply_channel_dd,
    apply_channel_integer,
    build_H,
    sample_channel,
    snr_to_sigma2,
)
from .detect import (
    DetectionResult,
    DetectorConfig,
    gibbs_detect,
    ml_cost,
    ml_detect_bruteforce,
    randomized_gibbs_detect,
)
from .chanest import (
    PNPilot,
    detect_peaks,
    discretize_channel,
    estimation_error,
    gen_pn_sequence,
    matched_filter_matrix,
    params_to_channel,
    simulate_pilot_rx,
)
from .harness import (
    BerRecord,
    ExperimentConfig,
    derive_frame_rng,
    emit_csv,
    load_config,
    run_ber_sweep,
    run_estimated_csi_sweep,
    run_estimation_error_sweep,
)

__version__ = "0.1.0"
