"""Link-level OTFS simulation with transmit/receive window designs.

The package covers the discrete ideal-pulse OTFS chain end to end: frame
geometry and symbol mapping (:mod:`otfswin.grid`), the DD/TF transforms and
their dense oracles (:mod:`otfswin.transforms`), delay-Doppler channel
generation and effective-channel analysis (:mod:`otfswin.channel`), window
construction including the MMSE-optimal transmit window
(:mod:`otfswin.windows`), embedded-pilot channel estimation
(:mod:`otfswin.estimation`), MMSE and sum-product detection
(:mod:`otfswin.detection`), and the Monte Carlo experiment harness with its
CLI (:mod:`otfswin.harness`, :mod:`otfswin.cli`).
"""

from .errors import ConfigurationError, NumericalFailure
from .grid import (
    Constellation,
    FrameGrid,
    GridResolutions,
    demap_frame,
    derive_resolutions,
    devectorize,
    map_symbols,
    vectorize,
)
from .transforms import KronOperators, build_kron_operators, dft_matrix, isfft, sfft
from .channel import (
    ChannelRealization,
    EffectiveDDChannel,
    PathSpec,
    PowerReport,
    Tap,
    channel_from_text,
    channel_to_text,
    circular_operator,
    dd_channel_matrix,
    dd_filter,
    delay_power_profile,
    effective_dd_channel,
    largest_taps,
    noise_filter,
    power_report,
    sample_channel,
    tf_channel,
    time_channel,
    transmit_frame,
)
from .windows import (
    DCWindowDesign,
    PowerAllocation,
    WindowPair,
    apply_window,
    dc_window,
    ideal_window_reference,
    nominal_sidelobe_level,
    optimal_tx_window,
    rectangular,
)
from .estimation import (
    PilotLayout,
    embed_pilot,
    estimate_channel,
    exact_interference_power,
    measured_ce_mse,
    predicted_interference_power,
    predicted_mse_floor,
)
from .detection import (
    DetectionReport,
    ErrorCounts,
    NoiseModel,
    analytic_detection_mse,
    count_errors,
    mmse_detect,
    mmse_error_covariance,
    mmse_trace_mse,
    noise_covariance,
    spa_detect,
)
from .harness import (
    ExperimentConfig,
    ResultRow,
    run_ce_mse,
    run_fer,
    run_selfcheck,
)

__version__ = "0.1.0"
