"""TF-domain window construction and the MMSE-optimal transmit power map.

Windows live on the (N, M) time-frequency grid.  The library stores window
shapes with a fixed per-axis normalization (each axis vector has unit mean
square, so a full separable grid W satisfies sum |W|^2 = M*N); any stricter
constraint is applied at composition time by the caller.

Two families are provided:

* shape windows for sparsity control: rectangular and Dolph-Chebyshev, both
  applied along the Doppler (time-slot) axis while the delay axis stays
  rectangular, since the delay spread of practical channels is already well
  resolved;
* the detection-MSE-optimal transmit window, computed from the per-bin TF
  channel gains as a mercury/water-filling power allocation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .grid import FrameGrid


# ---------------------------------------------------------------------------
# window pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowPair:
    """Transmit and receive windows as full (N, M) grids.

    ``joint`` (the entrywise product rx*tx) is what shapes the effective DD
    channel; only the tx grid affects transmit power, only the rx grid
    affects the noise statistics.
    """

    tx: np.ndarray
    rx: np.ndarray

    def __post_init__(self) -> None:
        tx = np.asarray(self.tx, dtype=complex)
        rx = np.asarray(self.rx, dtype=complex)
        if tx.shape != rx.shape or tx.ndim != 2:
            raise ValueError("tx and rx windows must share one (N, M) shape")
        object.__setattr__(self, "tx", tx)
        object.__setattr__(self, "rx", rx)

    @property
    def shape(self) -> tuple[int, int]:
        return self.tx.shape

    @property
    def joint(self) -> np.ndarray:
        return self.rx * self.tx

    def joint_power(self) -> float:
        """sum |rx*tx|^2 over the grid; M*N when jointly normalized."""
        return float(np.sum(np.abs(self.joint) ** 2))

    def is_joint_normalized(self, rel_tol: float = 1e-9) -> bool:
        target = self.tx.size
        return abs(self.joint_power() - target) <= rel_tol * target

    def tx_power(self) -> float:
        """Average transmit power scale (1/MN) * sum |tx|^2, 1 when normalized."""
        return float(np.mean(np.abs(self.tx) ** 2))

    @classmethod
    def rectangular(cls, grid: FrameGrid) -> "WindowPair":
        ones = np.ones(grid.shape)
        return cls(tx=ones, rx=ones.copy())

    @classmethod
    def separable(
        cls,
        grid: FrameGrid,
        tx_doppler: np.ndarray | None = None,
        tx_delay: np.ndarray | None = None,
        rx_doppler: np.ndarray | None = None,
        rx_delay: np.ndarray | None = None,
    ) -> "WindowPair":
        """Build a pair from per-axis vectors; omitted axes are rectangular.

        Doppler-axis vectors have length N (time slots), delay-axis vectors
        length M (subcarriers).
        """

        def _outer(dop, dly):
            d = np.ones(grid.N, dtype=complex) if dop is None else np.asarray(dop, dtype=complex)
            f = np.ones(grid.M, dtype=complex) if dly is None else np.asarray(dly, dtype=complex)
            if d.size != grid.N or f.size != grid.M:
                raise ValueError("axis window lengths must match the grid")
            return np.outer(d, f)

        return cls(tx=_outer(tx_doppler, tx_delay), rx=_outer(rx_doppler, rx_delay))

    @classmethod
    def from_tx_grid(cls, tx: np.ndarray) -> "WindowPair":
        """Arbitrary (possibly non-separable) TX grid with a rectangular RX."""
        tx = np.asarray(tx, dtype=complex)
        return cls(tx=tx, rx=np.ones_like(tx))


def rectangular(length: int) -> np.ndarray:
    """All-ones axis window."""
    if length < 1:
        raise ValueError("window length must be >= 1")
    return np.ones(length)


def apply_window(frame: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Point-wise multiplication of a TF frame by a window grid."""
    frame = np.asarray(frame)
    window = np.asarray(window)
    if frame.shape != window.shape:
        raise ValueError(f"shape mismatch: frame {frame.shape} vs window {window.shape}")
    return frame * window


def ideal_window_reference(dk) -> np.ndarray:
    """Brick-wall Doppler response used only as a comparison curve.

    Returns 1 for offsets within half a bin of the target (inclusive), else 0.
    Not realizable with a finite frame, hence never synthesized.
    """
    dk = np.asarray(dk, dtype=float)
    return (np.abs(dk) <= 0.5).astype(float)


# ---------------------------------------------------------------------------
# Dolph-Chebyshev design
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowResponse:
    """Densely sampled Doppler response of an axis window."""

    offsets_bins: np.ndarray    # dk grid in bins, 0 .. N/2
    magnitude: np.ndarray       # raw |response| samples over that grid
    mainlobe_width_bins: float  # null-to-null width
    sidelobe_db: float          # peak sidelobe relative to the mainlobe peak


@dataclass(frozen=True)
class DCWindowDesign:
    """A Dolph-Chebyshev Doppler-axis window plus its measured figures."""

    coeffs: np.ndarray          # length-N real, normalized to sum(c^2) = N
    sl_db_target: float
    sl_db_measured: float
    k_main: float               # measured null-to-null mainlobe width, bins
    sl_db_formula: float        # closed-form width/attenuation relation, informational


def _chebyshev_coeffs(length: int, attenuation_db: float) -> np.ndarray:
    """Equiripple window coefficients via Chebyshev frequency sampling.

    Samples T_{N-1}(x0*cos(theta/2)) at N equispaced frequencies and inverse
    transforms; x0 is chosen so every sidelobe sits attenuation_db below the
    mainlobe.  Returns a symmetric real window, peak-normalized.
    """
    order = length - 1
    ripple = 10.0 ** (abs(attenuation_db) / 20.0)  # sidelobe ratio >= 1
    x0 = np.cosh(np.arccosh(ripple) / order)
    x = x0 * np.cos(np.pi * np.arange(length) / length)
    response = np.empty(length)
    above = x > 1
    below = x < -1
    inside = ~(above | below)
    response[above] = np.cosh(order * np.arccosh(x[above]))
    response[below] = (2 * (length % 2) - 1) * np.cosh(order * np.arccosh(-x[below]))
    response[inside] = np.cos(order * np.arccos(x[inside]))
    if length % 2:
        w = np.real(np.fft.fft(response))
        half = (length + 1) // 2
        w = w[:half]
        w = np.concatenate((w[half - 1:0:-1], w))
    else:
        # half-sample phase shift keeps the even-length window symmetric
        response = response * np.exp(1j * np.pi * np.arange(length) / length)
        w = np.real(np.fft.fft(response))
        half = length // 2 + 1
        w = np.concatenate((w[half - 1:0:-1], w[1:half]))
    return w / np.max(w)


def measure_doppler_response(coeffs: np.ndarray, oversample: int = 128) -> WindowResponse:
    """Dense scan of an axis window's DD-domain response.

    The response is (1/N) * sum_n c[n] exp(-j2pi n dk / N) on an oversampled
    dk grid; the mainlobe is delimited by the first local minimum after the
    peak and the sidelobe level is the largest magnitude beyond it.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.size
    dense = np.abs(np.fft.fft(coeffs, n=n * oversample)) / n
    half = (n * oversample) // 2
    peak = dense[0]
    j = 1
    while j < half and dense[j + 1] < dense[j]:
        j += 1
    if j >= half:
        raise ConfigurationError(
            "window mainlobe spans the whole Doppler axis (no sidelobe region)"
        )
    sidelobe = float(np.max(dense[j:half + 1]) / peak)
    return WindowResponse(
        offsets_bins=np.arange(half + 1) / oversample,
        magnitude=dense[:half + 1],
        mainlobe_width_bins=2.0 * j / oversample,
        sidelobe_db=20.0 * math.log10(max(sidelobe, 1e-300)),
    )


def dc_sidelobe_formula_db(length: int, k_main: float) -> float:
    """Closed-form attenuation/width relation for the Chebyshev design.

    Informational only: its argument units do not reconcile exactly with
    measured widths, so measured figures are authoritative and this value is
    reported alongside them.
    """
    c = math.cos(k_main / 2.0)
    if 1.0 + c < 1e-12:
        return float("-inf")
    arg = (3.0 - c) / (1.0 + c)
    return -20.0 * math.log10(math.cosh(length / 2.0 * math.acosh(arg)))


def max_achievable_attenuation_db(length: int) -> float:
    """Largest attenuation whose mainlobe still leaves a sidelobe region."""
    if length < 3:
        return 0.0
    order = length - 1
    # keep the first null strictly inside the half grid (one bin of margin)
    x0_max = math.cos(math.pi / (2 * order)) / math.cos(math.pi * (length - 1) / (2 * length))
    if x0_max <= 1.0:
        return 0.0
    return 20.0 * math.log10(math.cosh(order * math.acosh(x0_max)))


def dc_window(length: int, sl_db: float, oversample: int = 128) -> DCWindowDesign:
    """Design a Dolph-Chebyshev Doppler window with the given sidelobe level.

    ``sl_db`` is the requested sidelobe level in dB (negative, at most -10).
    Coefficients come back normalized to unit mean square (sum c^2 = N) so a
    separable pair built from them keeps both the transmit-power and the
    joint-window normalization when the other axes are rectangular.
    """
    if length < 3:
        raise ConfigurationError("Chebyshev design needs a window length of at least 3")
    if sl_db > -10.0:
        raise ConfigurationError("sidelobe target must be -10 dB or lower")
    coeffs = _chebyshev_coeffs(length, -abs(sl_db))
    try:
        resp = measure_doppler_response(coeffs, oversample=oversample)
    except ConfigurationError:
        raise ConfigurationError(
            f"requested {sl_db:.1f} dB is infeasible for N={length}; "
            f"max achievable attenuation is about "
            f"{max_achievable_attenuation_db(length):.1f} dB"
        ) from None
    coeffs = coeffs * math.sqrt(length / np.sum(coeffs ** 2))
    return DCWindowDesign(
        coeffs=coeffs,
        sl_db_target=float(sl_db),
        sl_db_measured=resp.sidelobe_db,
        k_main=resp.mainlobe_width_bins,
        sl_db_formula=dc_sidelobe_formula_db(length, resp.mainlobe_width_bins),
    )


def nominal_sidelobe_level(kind: str, length: int, sl_db: float | None = None) -> float:
    """Sidelobe level fed to the analytic estimation-floor predictor.

    Rectangular windows are taken at 1/N; designed windows at their target
    ripple.  Real responses have non-constant sidelobes, so predictions carry
    a tolerance of a couple of dB.
    """
    kind = kind.lower()
    if kind == "rect":
        return 1.0 / length
    if kind == "dc":
        if sl_db is None:
            raise ValueError("dc window needs its design sidelobe level")
        return 10.0 ** (sl_db / 20.0)
    raise ValueError(f"no nominal sidelobe level for window kind {kind!r}")


# ---------------------------------------------------------------------------
# MMSE-optimal transmit window (mercury/water filling)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerAllocation:
    """Power map for the optimal TX window.

    ``x`` holds the per-bin powers |U|^2 (budget: mean x = 1), ``eta`` the
    dual water level, ``mercury`` the per-vessel mercury column poured in
    before the water.
    """

    x: np.ndarray
    eta: float
    mercury: np.ndarray

    @property
    def tx_window(self) -> np.ndarray:
        # detection MSE is phase-blind, so the window is taken real
        return np.sqrt(self.x)


def _allocation(lam: np.ndarray, eta: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.sqrt(1.0 / (eta * lam)) - 1.0 / lam
    return np.where(lam > 0, np.maximum(raw, 0.0), 0.0)


def optimal_tx_window(lam: np.ndarray) -> PowerAllocation:
    """Minimize the mean MMSE detection error over TF power allocations.

    ``lam`` are the nonnegative per-bin TF channel gains |H[n,m]|^2 / N0.
    The solution is the water-filling form [sqrt(1/(eta*lam)) - 1/lam]^+ with
    the dual level eta fixed by bisection on the unit-mean power budget (the
    budget is strictly decreasing in eta, so bisection converges to the same
    fixed point an exhaustive search would).
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("channel gains must be finite and nonnegative")
    if not np.any(lam > 0):
        raise ValueError("all channel gains are zero; no useful allocation exists")

    hi = float(lam.max())  # budget(hi) = 0
    lo = hi
    while float(np.mean(_allocation(lam, lo))) < 1.0:
        lo *= 0.5
        if lo < 1e-300:
            raise ValueError("power budget cannot be met")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(np.mean(_allocation(lam, mid))) >= 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * hi:
            break
    eta = 0.5 * (lo + hi)
    x = _allocation(lam, eta)

    inv_eta_sqrt = math.sqrt(1.0 / eta)
    with np.errstate(divide="ignore"):
        inv_lam_sqrt = np.where(lam > 0, np.sqrt(1.0 / np.maximum(lam, 1e-300)), np.inf)
    mercury = inv_eta_sqrt * np.maximum(inv_eta_sqrt - inv_lam_sqrt, 0.0)
    return PowerAllocation(x=x, eta=eta, mercury=mercury)
