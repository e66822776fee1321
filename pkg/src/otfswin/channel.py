"""Doubly-dispersive channels in the delay-Doppler domain.

The module generates sparse multipath channels with integer delays and
(possibly fractional) Doppler shifts, builds their TF/time-domain operators
under the ideal-pulse assumption, and computes the windowed effective DD
channel together with its closed forms for rectangular windows.

Ideal transceiver pulses are assumed throughout: the TF channel is exactly
diagonal and the DD-domain input/output relation is an exact 2-D circular
convolution with the effective tap grid.  Rectangular pulses share the same
sparsity pattern up to a phase, so everything here transfers to that case.

Fractional Doppler offsets are real-valued circular distances; they are
reduced into [-N/2, N/2) before closed forms are evaluated.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .grid import FrameGrid
from .transforms import KRON_ORACLE_LIMIT, build_kron_operators, dft_matrix, isfft, sfft
from .windows import WindowPair


@dataclass(frozen=True)
class PathSpec:
    """One propagation path: complex gain, integer delay bin, and a Doppler
    shift split into an integer bin plus a fractional part in (-1/2, 1/2)."""

    gain: complex
    delay_bin: int
    doppler_bin: int
    doppler_frac: float = 0.0

    def __post_init__(self) -> None:
        if self.delay_bin < 0:
            raise ValueError("delay bin must be nonnegative")
        if not -0.5 < self.doppler_frac < 0.5:
            raise ValueError("fractional Doppler must lie strictly inside (-1/2, 1/2)")

    @property
    def doppler_shift(self) -> float:
        """Total Doppler in bins (integer part plus fraction)."""
        return self.doppler_bin + self.doppler_frac


@dataclass(frozen=True)
class ChannelRealization:
    paths: tuple[PathSpec, ...]
    grid: FrameGrid

    def __post_init__(self) -> None:
        if not self.paths:
            raise ValueError("channel needs at least one path")
        object.__setattr__(self, "paths", tuple(self.paths))

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.paths])

    def total_gain_power(self) -> float:
        return float(np.sum(np.abs(self.gains()) ** 2))


def delay_power_profile(delay_bins: np.ndarray) -> np.ndarray:
    """Per-path gain variances for a set of delay bins.

    Normalized exponential profile exp(-0.1*l_i) / sum_j exp(-0.1*l_j); the
    variances sum to one for every delay draw.
    """
    profile = np.exp(-0.1 * np.asarray(delay_bins, dtype=float))
    return profile / profile.sum()


def sample_channel(
    grid: FrameGrid,
    num_paths: int,
    k_max: int,
    l_max: int,
    rng: np.random.Generator,
) -> ChannelRealization:
    """Draw a random multipath channel.

    Delays are uniform on {0..l_max} (with replacement, so equal-delay paths
    can and do occur), integer Doppler uniform on {-k_max..k_max}, fractional
    Doppler uniform on (-1/2, 1/2).  Gains are zero-mean complex Gaussian
    with variances following the normalized exponential power delay profile
    exp(-0.1*l_i) / sum_j exp(-0.1*l_j), so the expected total path power is
    exactly 1 for every realization.
    """
    if num_paths < 1:
        raise ValueError("need at least one path")
    if not 0 <= k_max <= (grid.N - 1) // 2:
        raise ValueError(f"k_max must lie in [0, {(grid.N - 1) // 2}] for N={grid.N}")
    if not 0 <= l_max <= grid.M - 1:
        raise ValueError(f"l_max must lie in [0, {grid.M - 1}] for M={grid.M}")

    delays = rng.integers(0, l_max + 1, size=num_paths)
    dopplers = rng.integers(-k_max, k_max + 1, size=num_paths)
    fracs = rng.random(num_paths) - 0.5
    while np.any(fracs <= -0.5):  # exclude the closed endpoint
        redo = fracs <= -0.5
        fracs[redo] = rng.random(int(np.count_nonzero(redo))) - 0.5

    variances = delay_power_profile(delays)
    scale = np.sqrt(variances / 2.0)
    gains = scale * (rng.standard_normal(num_paths) + 1j * rng.standard_normal(num_paths))

    paths = tuple(
        PathSpec(gain=complex(g), delay_bin=int(l), doppler_bin=int(k), doppler_frac=float(f))
        for g, l, k, f in zip(gains, delays, dopplers, fracs)
    )
    return ChannelRealization(paths=paths, grid=grid)


# ---------------------------------------------------------------------------
# TF / time-domain operators (ideal pulses)
# ---------------------------------------------------------------------------

def tf_channel(ch: ChannelRealization) -> np.ndarray:
    """Per-bin TF channel gains H[n, m] as an (N, M) grid.

    Under ideal pulses the TF channel matrix is diagonal; flattening this
    grid row-major gives the diagonal in vector order n*M + m.
    """
    grid = ch.grid
    n = np.arange(grid.N)[:, None]
    m = np.arange(grid.M)[None, :]
    out = np.zeros((grid.N, grid.M), dtype=complex)
    for p in ch.paths:
        nu = p.doppler_shift
        phase = np.exp(-2j * np.pi * nu * p.delay_bin / (grid.N * grid.M))
        out += p.gain * phase * np.exp(2j * np.pi * (n * nu / grid.N - m * p.delay_bin / grid.M))
    return out


def time_channel(tf_gain_grid: np.ndarray) -> np.ndarray:
    """Dense time-domain channel matrix from the diagonal TF gains.

    H_t = kron(I_N, F_M^H) diag(H_tf) kron(I_N, F_M): block diagonal with N
    circulant-like M x M blocks.  Oracle scale only (MN <= 4096).
    """
    n, m = tf_gain_grid.shape
    if n * m > KRON_ORACLE_LIMIT:
        raise ValueError(f"dense oracle limited to M*N <= {KRON_ORACLE_LIMIT}")
    f_m = dft_matrix(m)
    blocks = np.zeros((n * m, n * m), dtype=complex)
    for slot in range(n):
        d = np.diag(tf_gain_grid[slot])
        blocks[slot * m:(slot + 1) * m, slot * m:(slot + 1) * m] = f_m.conj().T @ d @ f_m
    return blocks


# ---------------------------------------------------------------------------
# DD-domain filters and the effective channel
# ---------------------------------------------------------------------------

def _dd_response(tf_grid: np.ndarray) -> np.ndarray:
    """(1/NM) * sum_{n,m} A[n,m] exp(-j2pi nk/N) exp(+j2pi ml/M) for all (k,l)."""
    n = tf_grid.shape[0]
    return np.fft.fft(np.fft.ifft(tf_grid, axis=1), axis=0) / n


def dd_filter(windows: WindowPair, dk: float, dl: float) -> complex:
    """Joint-window DD filter at a real-valued (Doppler, delay) offset."""
    w = windows.joint
    n, m = w.shape
    ph_n = np.exp(-2j * np.pi * np.arange(n) * dk / n)
    ph_m = np.exp(2j * np.pi * np.arange(m) * dl / m)
    return complex(ph_n @ w @ ph_m / (n * m))


def rect_doppler_response(dk, length: int) -> np.ndarray:
    """Closed-form Doppler response of the joint rectangular window.

    Equals (1/N) * sum_n exp(-j2pi n dk/N): a Dirichlet kernel with linear
    phase, periodic in dk with period N.  Exact at integer offsets (1 at
    multiples of N, 0 otherwise).
    """
    dk = np.asarray(dk, dtype=float)
    x = dk - length * np.floor(dk / length + 0.5)  # reduce to [-N/2, N/2)
    mag = np.sinc(x) / np.sinc(x / length)
    return mag * np.exp(-1j * np.pi * x * (length - 1) / length)


def rect_delay_response(dl, length: int) -> np.ndarray:
    """Delay-axis counterpart of :func:`rect_doppler_response` (conjugate
    exponent, hence the opposite phase slope)."""
    dl = np.asarray(dl, dtype=float)
    x = dl - length * np.floor(dl / length + 0.5)
    mag = np.sinc(x) / np.sinc(x / length)
    return mag * np.exp(1j * np.pi * x * (length - 1) / length)


def noise_filter(rx_window: np.ndarray) -> np.ndarray:
    """DD-domain filter the RX window applies to the channel noise."""
    return _dd_response(np.asarray(rx_window, dtype=complex))


@dataclass(frozen=True)
class Tap:
    doppler: int   # modular Doppler offset in 0..N-1
    delay: int     # modular delay offset in 0..M-1
    value: complex


@dataclass(frozen=True)
class EffectiveDDChannel:
    """Windowed effective channel: full (N, M) tap grid plus, optionally,
    the truncation to its largest taps.  Indices are modular by construction,
    so the grid itself encodes the circular structure."""

    taps: np.ndarray
    truncation: tuple[Tap, ...] | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.taps.shape

    def total_power(self) -> float:
        return float(np.sum(np.abs(self.taps) ** 2))

    def truncated_power(self) -> float:
        if self.truncation is None:
            return self.total_power()
        return float(sum(abs(t.value) ** 2 for t in self.truncation))

    def residual_power(self) -> float:
        """Tap energy outside the truncation (treated as noise by detectors)."""
        return max(self.total_power() - self.truncated_power(), 0.0)


def largest_taps(tap_grid: np.ndarray, count: int) -> tuple[Tap, ...]:
    """The ``count`` largest-magnitude taps, ties broken by (k, l) order.

    Exact zeros are never selected, so integer-Doppler channels keep their
    natural sparsity even when ``count`` exceeds the active tap number.
    """
    if count < 1:
        raise ValueError("tap count must be >= 1")
    n, m = tap_grid.shape
    flat = tap_grid.reshape(-1)
    mag = np.abs(flat)
    order = np.lexsort((np.arange(flat.size) % m, np.arange(flat.size) // m, -mag))
    picked = []
    for idx in order[:count]:
        if mag[idx] == 0.0:
            break
        picked.append(Tap(doppler=int(idx // m), delay=int(idx % m), value=complex(flat[idx])))
    return tuple(picked)


def effective_dd_channel(
    ch: ChannelRealization,
    windows: WindowPair,
    truncate_to: int | None = None,
) -> EffectiveDDChannel:
    """Effective DD channel h_w[k, l] under a TX/RX window pair.

    Each path contributes its gain times the joint-window DD filter shifted
    to the path's (Doppler, delay) position, times the delay-Doppler phase
    rotation exp(-j2pi nu*l_tau/(NM)).  Computed exactly per path with one
    2-D FFT of the modulated joint window.
    """
    grid = ch.grid
    if windows.shape != grid.shape:
        raise ValueError("window grid does not match the frame grid")
    w = windows.joint
    n_idx = np.arange(grid.N)[:, None]
    m_idx = np.arange(grid.M)[None, :]
    taps = np.zeros(grid.shape, dtype=complex)
    for p in ch.paths:
        nu = p.doppler_shift
        ramp = np.exp(2j * np.pi * (n_idx * nu / grid.N - m_idx * p.delay_bin / grid.M))
        phase = np.exp(-2j * np.pi * nu * p.delay_bin / (grid.N * grid.M))
        taps += p.gain * phase * _dd_response(w * ramp)
    trunc = largest_taps(taps, truncate_to) if truncate_to is not None else None
    return EffectiveDDChannel(taps=taps, truncation=trunc)


# ---------------------------------------------------------------------------
# vectorized operators and the simulation fast path
# ---------------------------------------------------------------------------

def dd_channel_matrix(ch: ChannelRealization, windows: WindowPair) -> np.ndarray:
    """Dense DD-domain channel matrix of the full vectorized model.

    Built literally as demodulator * V * per-slot-DFT * H_t * per-slot-IDFT
    * U * modulator; this is the oracle the FFT fast path is checked against.
    """
    grid = ch.grid
    ops = build_kron_operators(grid.M, grid.N)  # enforces the oracle bound
    h_t = time_channel(tf_channel(ch))
    u = np.diag(windows.tx.reshape(-1))
    v = np.diag(windows.rx.reshape(-1))
    return (
        ops.demodulator
        @ v
        @ ops.per_slot_dft
        @ h_t
        @ ops.per_slot_dft.conj().T
        @ u
        @ ops.modulator
    )


def circular_operator(tap_grid: np.ndarray) -> np.ndarray:
    """Dense 2-D circular-convolution matrix generated by a DD tap grid.

    Row k*M+l, column k'*M+l' holds taps[(k-k') mod N, (l-l') mod M]; with
    ideal pulses this equals the DD channel matrix for any window pair.
    """
    n, m = tap_grid.shape
    idx = np.arange(n * m)
    k, l = idx // m, idx % m
    dk = (k[:, None] - k[None, :]) % n
    dl = (l[:, None] - l[None, :]) % m
    return tap_grid[dk, dl]


def transmit_frame(
    dd_frame: np.ndarray,
    tf_gain_grid: np.ndarray,
    windows: WindowPair,
    n0: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Pass a DD frame through the windowed ideal-pulse channel.

    Exact FFT chain: modulate, TX window, per-bin TF gains, additive white
    TF noise of power n0, RX window, demodulate.  Returns the received DD
    frame.
    """
    x_tf = isfft(dd_frame)
    received = tf_gain_grid * (windows.tx * x_tf)
    if n0 > 0.0:
        if rng is None:
            raise ValueError("noise requested but no rng supplied")
        noise = math.sqrt(n0 / 2.0) * (
            rng.standard_normal(x_tf.shape) + 1j * rng.standard_normal(x_tf.shape)
        )
        received = received + noise
    return sfft(windows.rx * received)


# ---------------------------------------------------------------------------
# power accounting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerReport:
    total: float     # sum |h_w|^2 over the grid
    per_path: float  # sum over paths of |h_i|^2 * (filter energy)
    cross: float     # total - per_path: the inter-path spread term


def power_report(ch: ChannelRealization, windows: WindowPair) -> PowerReport:
    """Split the effective-channel power into per-path and inter-spread parts.

    Requires a jointly normalized window (sum |rx*tx|^2 = MN); otherwise the
    split is meaningless and the input is rejected.  The per-path filter
    energy is independent of the path position (the DD filter is a unitary
    image of the joint window), so it reduces to (1/MN) * sum |rx*tx|^2 per
    path.
    """
    if not windows.is_joint_normalized(rel_tol=1e-6):
        raise ValueError("power report needs a jointly normalized window pair")
    eff = effective_dd_channel(ch, windows)
    total = eff.total_power()
    filter_energy = windows.joint_power() / windows.tx.size
    per_path = ch.total_gain_power() * filter_energy
    return PowerReport(total=total, per_path=per_path, cross=total - per_path)


# ---------------------------------------------------------------------------
# serialization (replay / regression records)
# ---------------------------------------------------------------------------

def channel_to_text(ch: ChannelRealization) -> str:
    """One line per path: ``gain_re gain_im delay_bin doppler_bin frac``."""
    buf = io.StringIO()
    for p in ch.paths:
        gain = complex(p.gain)
        buf.write(
            f"{gain.real!r} {gain.imag!r} {int(p.delay_bin)} {int(p.doppler_bin)} "
            f"{float(p.doppler_frac)!r}\n"
        )
    return buf.getvalue()


def channel_from_text(text: str, grid: FrameGrid) -> ChannelRealization:
    paths = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"line {line_no}: expected 5 fields, got {len(parts)}")
        re, im, l, k, frac = parts
        paths.append(
            PathSpec(
                gain=complex(float(re), float(im)),
                delay_bin=int(l),
                doppler_bin=int(k),
                doppler_frac=float(frac),
            )
        )
    return ChannelRealization(paths=tuple(paths), grid=grid)
