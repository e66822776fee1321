"""Monte Carlo experiment engine, configuration, and deterministic seeding.

Experiments are described by a flat key/value config (file or mapping); every
field is echoed into the run metadata together with a hash of the canonical
config text.  Each trial draws its RNG stream from (master seed, snr index,
trial index), so results are bit-identical regardless of scheduling and of
the worker count.

Output rows follow one CSV schema (header mandatory)::

    experiment,config_hash,snr_db,metric,value,ci_lo,ci_hi,trials

JSON output mirrors the rows as an array of objects.  Channel-estimation
runs can additionally be summarized in the compact CE row format
``snr_db,pilot_dbw,window,khat,mse_measured,mse_predicted``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import channel as ch_mod
from . import detection as det_mod
from . import estimation as est_mod
from . import windows as win_mod
from .errors import ConfigurationError
from .grid import Constellation, FrameGrid, derive_resolutions, map_symbols

_WINDOW_KINDS_TX = ("rect", "dc", "optimal")
_WINDOW_KINDS_RX = ("rect", "dc")
_DETECTORS = ("mmse", "spa")
_CSI_MODES = ("perfect-csir", "estimated-csir", "csit-csir")


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; unknown keys are rejected on parse."""

    M: int = 30
    N: int = 20
    delta_f: float = 5e3
    fc: float = 3e9
    constellation: str = "qpsk"
    paths: int = 5
    k_max: int = 3
    l_max: int = 4
    k_hat: int = 1
    pilot_power_dbw: float = 30.0
    tx_window: str = "rect"
    rx_window: str = "rect"
    dc_sl_db: float = -40.0
    detector: str = "mmse"
    spa_taps: int = 0            # 0 means the 3P-1 default
    spa_iters: int = 20
    spa_damping: float = 0.5
    csi: str = "perfect-csir"
    snr_db: tuple[float, ...] = (10.0, 20.0, 30.0)
    trials: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.constellation.lower() not in ("bpsk", "qpsk"):
            raise ConfigurationError(f"unknown constellation {self.constellation!r}")
        if self.tx_window not in _WINDOW_KINDS_TX:
            raise ConfigurationError(f"tx_window must be one of {_WINDOW_KINDS_TX}")
        if self.rx_window not in _WINDOW_KINDS_RX:
            raise ConfigurationError(f"rx_window must be one of {_WINDOW_KINDS_RX}")
        if self.detector not in _DETECTORS:
            raise ConfigurationError(f"detector must be one of {_DETECTORS}")
        if self.csi not in _CSI_MODES:
            raise ConfigurationError(f"csi must be one of {_CSI_MODES}")
        if self.trials < 1:
            raise ConfigurationError("trials must be positive")
        if self.tx_window == "optimal" and self.csi != "csit-csir":
            raise ConfigurationError("the optimal TX window needs csi = csit-csir")
        if self.tx_window == "dc" and self.rx_window == "dc":
            raise ConfigurationError(
                "shaping windows go on one side only; keep the other side rect"
            )
        try:
            grid = FrameGrid(M=self.M, N=self.N, delta_f=self.delta_f, fc=self.fc)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        if not 0 <= self.k_max <= (grid.N - 1) // 2:
            raise ConfigurationError(
                f"k_max must lie in [0, {(grid.N - 1) // 2}] for N={grid.N}"
            )
        if not 0 <= self.l_max <= grid.M - 1:
            raise ConfigurationError(f"l_max must lie in [0, {grid.M - 1}] for M={grid.M}")
        if self.paths < 1:
            raise ConfigurationError("paths must be positive")
        snrs = self.snr_db
        if isinstance(snrs, str):
            snrs = [p for p in snrs.replace(",", " ").split() if p]
        try:
            snrs = tuple(float(s) for s in snrs)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad snr_db list: {self.snr_db!r}") from exc
        if not snrs:
            raise ConfigurationError("at least one SNR point is required")
        object.__setattr__(self, "snr_db", snrs)

    # -- construction ------------------------------------------------------

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        known = cls.field_names()
        unknown = sorted(set(mapping) - set(known))
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in mapping:
                continue
            raw = mapping[f.name]
            try:
                if f.name == "snr_db":
                    if isinstance(raw, str):
                        raw = [p for p in raw.replace(",", " ").split() if p]
                    kwargs[f.name] = tuple(float(v) for v in raw)
                elif f.type in ("int", int):
                    kwargs[f.name] = int(raw)
                elif f.type in ("float", float):
                    kwargs[f.name] = float(raw)
                else:
                    kwargs[f.name] = str(raw).strip()
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"bad value for {f.name!r}: {raw!r}") from exc
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        mapping: dict[str, str] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigurationError(f"{path}:{line_no}: expected 'key = value'")
                key, value = (part.strip() for part in line.split("=", 1))
                if key in mapping:
                    raise ConfigurationError(f"{path}:{line_no}: duplicate key {key!r}")
                mapping[key] = value
        return cls.from_mapping(mapping)

    # -- derived views -----------------------------------------------------

    def grid(self) -> FrameGrid:
        return FrameGrid(M=self.M, N=self.N, delta_f=self.delta_f, fc=self.fc)

    def constellation_obj(self) -> Constellation:
        return Constellation.by_name(self.constellation)

    def spa_tap_count(self) -> int:
        return self.spa_taps if self.spa_taps > 0 else 3 * self.paths - 1

    def canonical_text(self) -> str:
        items = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "snr_db":
                value = ",".join(f"{v:.10g}" for v in value)
            items.append(f"{f.name}={value}")
        return "\n".join(items)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:12]

    def metadata(self) -> dict:
        meta = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        meta["snr_db"] = list(self.snr_db)
        meta["config_hash"] = self.config_hash()
        res = derive_resolutions(self.grid())
        # the grid parameters decide the speed this setup actually supports
        meta["implied_max_speed_kmh"] = 3.6 * self.k_max * res.speed_res
        return meta


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    config_hash: str
    snr_db: float
    metric: str
    value: float
    ci_lo: float
    ci_hi: float
    trials: int


CSV_HEADER = "experiment,config_hash,snr_db,metric,value,ci_lo,ci_hi,trials"


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def rows_to_csv(rows: list[ResultRow]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            f"{r.experiment},{r.config_hash},{_fmt(r.snr_db)},{r.metric},"
            f"{_fmt(r.value)},{_fmt(r.ci_lo)},{_fmt(r.ci_hi)},{r.trials}"
        )
    return "\n".join(lines) + "\n"


def rows_to_json(rows: list[ResultRow]) -> str:
    return json.dumps([dataclasses.asdict(r) for r in rows], indent=2) + "\n"


def write_rows(rows: list[ResultRow], path: str, fmt: str = "csv") -> None:
    text = rows_to_csv(rows) if fmt == "csv" else rows_to_json(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_metadata(config: ExperimentConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.metadata(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def ce_rows_csv(rows: list[ResultRow], config: ExperimentConfig) -> str:
    """Compact channel-estimation summary, one line per SNR point."""
    measured = {r.snr_db: r.value for r in rows if r.metric == "ce_mse"}
    predicted = {r.snr_db: r.value for r in rows if r.metric == "ce_mse_predicted"}
    window = config.tx_window if config.tx_window != "rect" else config.rx_window
    lines = ["snr_db,pilot_dbw,window,khat,mse_measured,mse_predicted"]
    for snr in sorted(measured):
        lines.append(
            f"{_fmt(snr)},{_fmt(config.pilot_power_dbw)},{window},{config.k_hat},"
            f"{_fmt(measured[snr])},{_fmt(predicted[snr])}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# confidence intervals
# ---------------------------------------------------------------------------

def _db(x: float) -> float:
    return 10.0 * math.log10(max(x, 1e-300))


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """95% Wilson score interval for a binomial rate."""
    if trials < 1:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    spread = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(center - spread, 0.0), min(center + spread, 1.0)


def mean_interval(samples: np.ndarray, z: float = 1.96) -> tuple[float, float, float]:
    """Sample mean with a normal-approximation 95% interval."""
    samples = np.asarray(samples, dtype=float)
    mean = float(samples.mean())
    if samples.size < 2:
        return mean, mean, mean
    half = z * float(samples.std(ddof=1)) / math.sqrt(samples.size)
    return mean, mean - half, mean + half


# ---------------------------------------------------------------------------
# window construction per config
# ---------------------------------------------------------------------------

def build_windows(config: ExperimentConfig, grid: FrameGrid) -> win_mod.WindowPair:
    """Window pair for non-adaptive (rect/dc) selections."""
    if config.tx_window == "optimal":
        raise ValueError("the optimal TX window is built per channel realization")
    tx_dop = rx_dop = None
    if config.tx_window == "dc":
        tx_dop = win_mod.dc_window(grid.N, config.dc_sl_db).coeffs
    if config.rx_window == "dc":
        rx_dop = win_mod.dc_window(grid.N, config.dc_sl_db).coeffs
    return win_mod.WindowPair.separable(grid, tx_doppler=tx_dop, rx_doppler=rx_dop)


def config_sidelobe_level(config: ExperimentConfig, grid: FrameGrid) -> float:
    """Nominal sidelobe level of the shaping window for the floor predictor."""
    if config.tx_window == "dc" or config.rx_window == "dc":
        return win_mod.nominal_sidelobe_level("dc", grid.N, config.dc_sl_db)
    return win_mod.nominal_sidelobe_level("rect", grid.N)


def _trial_rng(config: ExperimentConfig, snr_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, snr_index, trial])


def _map_trials(worker, trials: int, threads: int) -> list:
    """Run trials over a work queue; results keep trial order regardless of
    scheduling because each trial derives its own RNG stream."""
    if threads <= 1:
        return [worker(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(trials)))


# ---------------------------------------------------------------------------
# channel-estimation experiment
# ---------------------------------------------------------------------------

def run_ce_mse(config: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Measured CE error (summed over the pilot read window, at the received
    pilot scale) against the analytic floor, per SNR point."""
    grid = config.grid()
    constellation = config.constellation_obj()
    windows = build_windows(config, grid)
    layout = est_mod.PilotLayout.centered(
        grid, config.k_max, config.l_max, config.k_hat, config.pilot_power_dbw
    )
    data_mask = layout.data_mask(grid)
    n_bits = int(data_mask.sum()) * constellation.bits_per_symbol
    predicted = est_mod.predicted_mse_floor(grid, layout, config_sidelobe_level(config, grid))

    rows: list[ResultRow] = []
    for snr_index, snr in enumerate(config.snr_db):
        n0 = 10.0 ** (-snr / 10.0)

        def trial(t: int, _n0=n0, _snr_index=snr_index) -> float:
            rng = _trial_rng(config, _snr_index, t)
            ch = ch_mod.sample_channel(grid, config.paths, config.k_max, config.l_max, rng)
            truth = ch_mod.effective_dd_channel(ch, windows).taps
            frame = map_symbols(rng.integers(0, 2, n_bits), constellation, grid, mask=data_mask)
            frame = est_mod.embed_pilot(frame, layout, grid)
            received = ch_mod.transmit_frame(frame, ch_mod.tf_channel(ch), windows, _n0, rng)
            est = est_mod.estimate_channel(received, layout, grid, _n0)
            return est_mod.measured_ce_mse(truth, est, layout, grid)

        sse = np.array(_map_trials(trial, config.trials, threads))
        mean, lo, hi = mean_interval(sse)
        rows.append(ResultRow("ce-mse", config.config_hash(), snr, "ce_mse",
                              mean, lo, hi, config.trials))
        rows.append(ResultRow("ce-mse", config.config_hash(), snr, "ce_mse_db",
                              _db(mean), _db(lo), _db(hi), config.trials))
        rows.append(ResultRow("ce-mse", config.config_hash(), snr, "ce_mse_predicted",
                              predicted, predicted, predicted, config.trials))
        rows.append(ResultRow("ce-mse", config.config_hash(), snr, "ce_mse_predicted_db",
                              _db(predicted), _db(predicted), _db(predicted), config.trials))
    return rows


# ---------------------------------------------------------------------------
# frame-error-rate experiment
# ---------------------------------------------------------------------------

def _detect_frame(
    config: ExperimentConfig,
    grid: FrameGrid,
    constellation: Constellation,
    y: np.ndarray,
    taps: np.ndarray,
    noise: det_mod.NoiseModel,
    data_mask: np.ndarray | None,
    layout: est_mod.PilotLayout | None,
) -> np.ndarray:
    """Run the configured detector and return hard bits for the data cells."""
    if layout is not None:
        # remove the pilot's (estimated) contribution before detection
        shift = np.roll(taps, (layout.pilot_doppler, layout.pilot_delay), axis=(0, 1))
        y = y - layout.pilot_value * shift

    if config.detector == "mmse":
        h_full = ch_mod.circular_operator(taps)
        if data_mask is not None:
            h = h_full[:, data_mask.reshape(-1)]
        else:
            h = h_full
        report = det_mod.mmse_detect(y.reshape(-1), h, noise, constellation)
        return constellation.indices_to_bits(report.hard_indices)

    eff = ch_mod.EffectiveDDChannel(
        taps=taps, truncation=ch_mod.largest_taps(taps, config.spa_tap_count())
    )
    report = det_mod.spa_detect(
        y, eff, noise.n0, constellation,
        iters=config.spa_iters, damping=config.spa_damping, data_mask=data_mask,
    )
    idx = report.hard_indices.reshape(grid.shape)
    sel = idx[data_mask] if data_mask is not None else idx.reshape(-1)
    return constellation.indices_to_bits(sel)


def run_fer(config: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Frame/bit error rates per SNR under the configured CSI mode.

    perfect-csir: full-data frames, detector sees the true effective channel.
    estimated-csir: embedded-pilot frames, detector sees the threshold
    estimate and the pilot is cancelled with it.
    csit-csir: full-data frames, the TX window is rebuilt per realization
    from the TF gains (mercury/water filling) when tx_window = optimal.

    The MMSE detector consumes the full (possibly colored) noise covariance;
    the sum-product detector models the noise as white at power N0, so
    shaping RX windows pair with MMSE, not SPA.
    """
    grid = config.grid()
    constellation = config.constellation_obj()
    adaptive_tx = config.tx_window == "optimal"
    base_windows = None if adaptive_tx else build_windows(config, grid)

    layout = None
    if config.csi == "estimated-csir":
        layout = est_mod.PilotLayout.centered(
            grid, config.k_max, config.l_max, config.k_hat, config.pilot_power_dbw
        )
    data_mask = layout.data_mask(grid) if layout is not None else None
    n_data = int(data_mask.sum()) if data_mask is not None else grid.size
    bits_per_frame = n_data * constellation.bits_per_symbol

    rows: list[ResultRow] = []
    for snr_index, snr in enumerate(config.snr_db):
        n0 = 10.0 ** (-snr / 10.0)

        def trial(t: int, _n0=n0, _snr_index=snr_index) -> tuple[np.ndarray, np.ndarray]:
            rng = _trial_rng(config, _snr_index, t)
            ch = ch_mod.sample_channel(grid, config.paths, config.k_max, config.l_max, rng)
            tf_gains = ch_mod.tf_channel(ch)
            if adaptive_tx:
                allocation = win_mod.optimal_tx_window(np.abs(tf_gains) ** 2 / _n0)
                windows = win_mod.WindowPair.from_tx_grid(allocation.tx_window)
            else:
                windows = base_windows

            bits = rng.integers(0, 2, bits_per_frame)
            frame = map_symbols(bits, constellation, grid, mask=data_mask)
            if layout is not None:
                frame = est_mod.embed_pilot(frame, layout, grid)
            y = ch_mod.transmit_frame(frame, tf_gains, windows, _n0, rng)

            if layout is not None:
                taps = est_mod.estimate_channel(y, layout, grid, _n0)
            else:
                taps = ch_mod.effective_dd_channel(ch, windows).taps
            noise = det_mod.noise_covariance(windows.rx, _n0)
            detected = _detect_frame(config, grid, constellation, y, taps,
                                     noise, data_mask, layout)
            return detected, bits

        outcomes = _map_trials(trial, config.trials, threads)
        detected = np.concatenate([d for d, _ in outcomes])
        truth = np.concatenate([b for _, b in outcomes])
        counts = det_mod.count_errors(detected, truth, bits_per_frame)
        flo, fhi = wilson_interval(counts.frame_errors, counts.frames)
        blo, bhi = wilson_interval(counts.bit_errors, counts.bits)
        rows.append(ResultRow("fer", config.config_hash(), snr, "fer",
                              counts.fer, flo, fhi, counts.frames))
        rows.append(ResultRow("fer", config.config_hash(), snr, "ber",
                              counts.ber, blo, bhi, counts.frames))
    return rows


# ---------------------------------------------------------------------------
# self-check suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def run_selfcheck(seed: int = 0) -> list[CheckResult]:
    """Cross-oracle equivalence suite over transforms, channel operators,
    and detection identities.  Fast, deterministic, and independent of the
    FFT fast paths it validates."""
    from .transforms import build_kron_operators, isfft, sfft

    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []

    def check(name: str, err: float, tol: float) -> None:
        results.append(CheckResult(name, bool(err <= tol), f"err={err:.3e} tol={tol:.1e}"))

    # transforms vs dense Kronecker oracle
    worst = 0.0
    for m, n in ((2, 2), (4, 3), (8, 8)):
        x = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
        ops = build_kron_operators(m, n)
        worst = max(worst, float(np.max(np.abs(
            ops.modulator @ x.reshape(-1) - isfft(x).reshape(-1)))))
        worst = max(worst, float(np.max(np.abs(sfft(isfft(x)) - x))))
    check("transforms.kron_equivalence", worst, 1e-9)

    # full chain vs dense DD matrix
    worst = 0.0
    for m, n in ((4, 4), (8, 4)):
        grid = FrameGrid(M=m, N=n)
        ch = ch_mod.sample_channel(grid, 3, (n - 1) // 2, m - 1, rng)
        windows = win_mod.WindowPair(
            tx=rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m)),
            rx=rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m)),
        )
        h_dd = ch_mod.dd_channel_matrix(ch, windows)
        x = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
        fast = ch_mod.transmit_frame(x, ch_mod.tf_channel(ch), windows)
        worst = max(worst, float(np.max(np.abs(h_dd @ x.reshape(-1) - fast.reshape(-1)))))
        # the effective-tap circular operator is the same matrix
        eff = ch_mod.effective_dd_channel(ch, windows)
        worst = max(worst, float(np.max(np.abs(ch_mod.circular_operator(eff.taps) - h_dd))))
    check("channel.chain_vs_dense", worst, 1e-9)

    # rectangular closed forms vs direct summation
    grid = FrameGrid(M=8, N=16)
    windows = win_mod.WindowPair.rectangular(grid)
    worst = 0.0
    for _ in range(50):
        dk = rng.uniform(-grid.N, grid.N)
        dl = rng.uniform(-grid.M, grid.M)
        direct = ch_mod.dd_filter(windows, dk, dl)
        closed = (ch_mod.rect_doppler_response(dk, grid.N)
                  * ch_mod.rect_delay_response(dl, grid.M))
        worst = max(worst, abs(direct - complex(closed)))
    check("channel.rect_closed_form", worst, 1e-10)

    # integer-Doppler power conservation
    grid = FrameGrid(M=8, N=8)
    paths = (ch_mod.PathSpec(0.8 + 0.3j, 1, 2), ch_mod.PathSpec(-0.2 + 0.5j, 3, -1))
    ch = ch_mod.ChannelRealization(paths, grid)
    eff = ch_mod.effective_dd_channel(ch, win_mod.WindowPair.rectangular(grid))
    check("channel.integer_power_conservation",
          abs(eff.total_power() - ch.total_gain_power()), 1e-10)

    # invertible RX window leaves the MMSE detection error unchanged
    grid = FrameGrid(M=4, N=4)
    ch = ch_mod.sample_channel(grid, 2, 1, 3, rng)
    n0 = 0.05
    rect = win_mod.WindowPair.rectangular(grid)
    shaped = win_mod.WindowPair.separable(grid, rx_doppler=win_mod.dc_window(grid.N, -30).coeffs)
    x = Constellation.qpsk().points[rng.integers(0, 4, grid.size)]
    noise_tf = math.sqrt(n0 / 2) * (rng.standard_normal(grid.shape)
                                    + 1j * rng.standard_normal(grid.shape))
    mses = []
    for windows in (rect, shaped):
        h = ch_mod.dd_channel_matrix(ch, windows)
        y = h @ x + sfft(windows.rx * noise_tf).reshape(-1)
        noise = det_mod.noise_covariance(windows.rx, n0)
        rep = det_mod.mmse_detect(y, h, noise, Constellation.qpsk(), truth=x)
        mses.append(rep.mse_emp)
    check("detection.rx_window_invariance", abs(mses[0] - mses[1]), 1e-9)

    # two-channel optimal allocation closed form
    alloc = win_mod.optimal_tx_window(np.array([4.0, 1.0]))
    err = max(
        abs(alloc.eta - 36.0 / 169.0),
        abs(alloc.x[0] - 5.0 / 6.0),
        abs(alloc.x[1] - 7.0 / 6.0),
        abs(det_mod.analytic_detection_mse(np.array([4.0, 1.0]), alloc.x) - 9.0 / 26.0),
    )
    check("windows.two_channel_allocation", err, 1e-9)

    return results
