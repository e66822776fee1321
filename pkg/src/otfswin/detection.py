"""MMSE and sum-product detection in the DD domain, plus error counting.

The MMSE detector works on the dense vectorized model and supports colored
noise from a non-unimodular RX window through the full covariance (no
whitening: a whitening filter would undo the RX window's sparsity shaping).

The sum-product detector runs belief propagation on the factor graph induced
by the truncated effective channel: every received cell is a factor coupling
the L data symbols the truncated taps reach, and every symbol takes part in
L factors.  Tap energy outside the truncation is folded into the Gaussian
likelihood as extra noise.  Scheduling is flooding with message damping.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import EffectiveDDChannel
from .errors import ConfigurationError, NumericalFailure
from .grid import Constellation
from .transforms import dft_matrix


# ---------------------------------------------------------------------------
# noise model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """DD-domain noise after the RX window.

    ``covariance`` is None for the white fast path (unit-modulus RX window),
    otherwise the full Hermitian PSD matrix.
    """

    n0: float
    covariance: np.ndarray | None = None

    def matrix(self, size: int) -> np.ndarray:
        if self.covariance is not None:
            return self.covariance
        return self.n0 * np.eye(size)


def noise_covariance(rx_window: np.ndarray, n0: float) -> NoiseModel:
    """Noise covariance at the demodulator output for an RX window grid.

    C = n0 * demod * diag(V) diag(V)^H * demod^H.  A unit-modulus window
    leaves the noise white, so that case short-circuits to n0 * I.
    """
    v = np.asarray(rx_window, dtype=complex)
    if np.allclose(np.abs(v), 1.0, atol=1e-12):
        return NoiseModel(n0=n0)
    n, m = v.shape
    f_n, f_m = dft_matrix(n), dft_matrix(m)
    demod = np.kron(f_n, f_m.conj().T)
    weights = np.abs(v.reshape(-1)) ** 2
    cov = n0 * (demod * weights[None, :]) @ demod.conj().T
    return NoiseModel(n0=n0, covariance=cov)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectionReport:
    soft: np.ndarray                  # soft symbol estimates
    hard: np.ndarray                  # nearest constellation points
    hard_indices: np.ndarray          # constellation indices of the decisions
    mse_emp: float | None = None      # empirical per-symbol MSE vs supplied truth
    sigma_e2: float | None = None     # analytic per-symbol MSE, when computed
    marginals: np.ndarray | None = None  # SPA per-symbol posteriors
    iterations: int | None = None     # SPA iterations actually run


# ---------------------------------------------------------------------------
# linear MMSE
# ---------------------------------------------------------------------------

def mmse_detect(
    y: np.ndarray,
    channel_matrix: np.ndarray,
    noise: NoiseModel,
    constellation: Constellation,
    truth: np.ndarray | None = None,
) -> DetectionReport:
    """LMMSE symbol estimates x = H^H (H H^H + C)^(-1) y with hard slicing."""
    y = np.asarray(y, dtype=complex).reshape(-1)
    h = np.asarray(channel_matrix, dtype=complex)
    if h.shape[0] != y.size:
        raise ValueError("channel matrix rows must match the observation length")
    gram = h @ h.conj().T + noise.matrix(y.size)
    try:
        soft = h.conj().T @ np.linalg.solve(gram, y)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(
            "MMSE solve is singular (zero noise with a rank-deficient channel); "
            "refusing to regularize implicitly"
        ) from exc
    idx = constellation.nearest_indices(soft)
    mse = None
    if truth is not None:
        truth = np.asarray(truth, dtype=complex).reshape(-1)
        mse = float(np.mean(np.abs(soft - truth) ** 2))
    return DetectionReport(soft=soft, hard=constellation.points[idx], hard_indices=idx, mse_emp=mse)


def mmse_error_covariance(channel_matrix: np.ndarray, noise: NoiseModel) -> np.ndarray:
    """Error covariance (I + H^H C^(-1) H)^(-1) of the MMSE estimate."""
    h = np.asarray(channel_matrix, dtype=complex)
    size = h.shape[0]
    cov = noise.matrix(size)
    try:
        whitened = np.linalg.solve(cov, h)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("noise covariance is singular") from exc
    return np.linalg.inv(np.eye(h.shape[1]) + h.conj().T @ whitened)


def mmse_trace_mse(channel_matrix: np.ndarray, noise: NoiseModel) -> float:
    """Analytic per-symbol MSE: trace of the error covariance over its size."""
    e = mmse_error_covariance(channel_matrix, noise)
    return float(np.real(np.trace(e))) / e.shape[0]


def analytic_detection_mse(lam: np.ndarray, x: np.ndarray) -> float:
    """Mean MMSE per symbol for diagonal TF gains ``lam`` under power map ``x``.

    lam holds |H[n,m]|^2 / N0 and x the per-bin transmit powers |U|^2; the
    per-symbol error is the average of 1 / (lam * x + 1).
    """
    lam = np.asarray(lam, dtype=float)
    x = np.asarray(x, dtype=float)
    if lam.shape != x.shape:
        raise ValueError("gain and allocation grids must share a shape")
    if np.any(lam < 0) or np.any(x < 0):
        raise ValueError("gains and powers must be nonnegative")
    return float(np.mean(1.0 / (lam * x + 1.0)))


# ---------------------------------------------------------------------------
# sum-product detector
# ---------------------------------------------------------------------------

def _leave_one_out_products(factors: list[np.ndarray]) -> list[np.ndarray]:
    """Per-slot products of all entries except slot t (prefix/suffix trick)."""
    count = len(factors)
    ones = np.ones_like(factors[0])
    prefix = [ones]
    for f in factors[:-1]:
        prefix.append(prefix[-1] * f)
    suffix = [ones]
    for f in reversed(factors[1:]):
        suffix.append(suffix[-1] * f)
    return [prefix[t] * suffix[count - 1 - t] for t in range(count)]


def spa_detect(
    y_frame: np.ndarray,
    channel: EffectiveDDChannel,
    n0: float,
    constellation: Constellation,
    iters: int = 20,
    damping: float = 0.5,
    tol: float = 1e-4,
    data_mask: np.ndarray | None = None,
    max_configs: int = 8192,
) -> DetectionReport:
    """Iterative sum-product detection on the truncated-tap factor graph.

    ``channel`` must carry a tap truncation; its residual tap energy is added
    to ``n0`` in the likelihood.  ``data_mask`` marks the unknown symbols;
    cells outside it are treated as known zeros (the caller cancels any pilot
    beforehand), which simply removes their taps from the graph.

    Messages are probability vectors over the constellation; the factor
    update enumerates all Q^L joint configurations, so Q^L is capped by
    ``max_configs``.
    """
    if channel.truncation is None:
        raise ValueError("sum-product detection needs a tap-truncated channel")
    taps = channel.truncation
    if len(taps) < 1:
        raise ValueError("tap truncation is empty")
    points = constellation.points
    q = points.size
    degree = len(taps)
    if q ** degree > max_configs:
        raise ConfigurationError(
            f"sum step needs Q^L = {q ** degree} configurations, above the "
            f"budget of {max_configs}; reduce the tap count or raise max_configs"
        )
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")

    n, m = channel.shape
    size = n * m
    y = np.asarray(y_frame, dtype=complex).reshape(-1)
    if y.size != size:
        raise ValueError("observation shape does not match the channel grid")
    sigma2 = n0 + channel.residual_power()
    if sigma2 <= 0:
        sigma2 = 1e-12  # degenerate noiseless likelihood; keep it sharp but finite

    k_obs, l_obs = np.divmod(np.arange(size), m)
    sym_of = np.empty((size, degree), dtype=np.int64)
    gains = np.empty((size, degree), dtype=complex)
    for t, tap in enumerate(taps):
        sym_of[:, t] = ((k_obs - tap.doppler) % n) * m + (l_obs - tap.delay) % m
        gains[:, t] = tap.value
    if data_mask is not None:
        known = ~np.asarray(data_mask, dtype=bool).reshape(-1)
        gains[known[sym_of]] = 0.0  # known-zero symbols contribute nothing

    # observation index each symbol meets at tap slot t (inverse of sym_of)
    obs_of = np.empty((size, degree), dtype=np.int64)
    k_sym, l_sym = k_obs, l_obs
    for t, tap in enumerate(taps):
        obs_of[:, t] = ((k_sym + tap.doppler) % n) * m + (l_sym + tap.delay) % m

    configs = np.array(list(itertools.product(range(q), repeat=degree)), dtype=np.int64)
    config_values = points[configs]                      # (C, degree)
    one_hot = [
        (configs[:, t][:, None] == np.arange(q)[None, :]).astype(float)
        for t in range(degree)
    ]

    means = gains @ config_values.T                      # (size, C)
    dist = np.abs(y[:, None] - means) ** 2
    dist -= dist.min(axis=1, keepdims=True)              # scale-free normalization
    likelihood = np.exp(-dist / sigma2)

    to_symbol = np.full((size, degree, q), 1.0 / q)      # factor -> symbol messages
    from_symbol = np.full((size, degree, q), 1.0 / q)    # symbol -> factor messages
    iterations_run = 0
    for _ in range(iters):
        iterations_run += 1
        gathered = [from_symbol[np.arange(size)[:, None], t, configs[:, t][None, :]]
                    for t in range(degree)]
        # gathered[t][i, c] = message from the t-th neighbor of factor i
        # evaluated at that neighbor's value in configuration c
        loo = _leave_one_out_products(gathered)
        new_msgs = np.empty_like(to_symbol)
        for t in range(degree):
            weighted = likelihood * loo[t]
            msg = weighted @ one_hot[t]                  # (size, q)
            total = msg.sum(axis=1, keepdims=True)
            np.divide(msg, total, out=msg, where=total > 0)
            msg[np.squeeze(total <= 0, axis=1)] = 1.0 / q
            new_msgs[:, t, :] = msg
        delta = float(np.max(np.abs(new_msgs - to_symbol)))
        to_symbol = damping * new_msgs + (1.0 - damping) * to_symbol

        incoming = to_symbol[obs_of, np.arange(degree)[None, :], :]   # (size, degree, q)
        inc_factors = [incoming[:, t, :] for t in range(degree)]
        loo_sym = _leave_one_out_products(inc_factors)
        for t in range(degree):
            out = loo_sym[t]
            total = out.sum(axis=1, keepdims=True)
            out = np.divide(out, total, where=total > 0)
            out[np.squeeze(total <= 0, axis=1)] = 1.0 / q
            from_symbol[obs_of[:, t], t, :] = out
        if delta < tol:
            break

    belief = np.prod(to_symbol[obs_of, np.arange(degree)[None, :], :], axis=1)
    total = belief.sum(axis=1, keepdims=True)
    belief = np.divide(belief, total, where=total > 0)
    belief[np.squeeze(total <= 0, axis=1)] = 1.0 / q

    idx = belief.argmax(axis=1)
    soft = belief @ points
    return DetectionReport(
        soft=soft,
        hard=points[idx],
        hard_indices=idx,
        marginals=belief,
        iterations=iterations_run,
    )


# ---------------------------------------------------------------------------
# error counting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorCounts:
    ber: float
    fer: float
    bit_errors: int
    frame_errors: int
    bits: int
    frames: int


def count_errors(detected_bits: np.ndarray, true_bits: np.ndarray, bits_per_frame: int) -> ErrorCounts:
    """Bit and frame error rates over a concatenation of equal-size frames.

    A frame counts as erroneous when any of its bits differs; pilot/guard
    cells must already be excluded from the bit streams.
    """
    detected_bits = np.asarray(detected_bits).reshape(-1)
    true_bits = np.asarray(true_bits).reshape(-1)
    if detected_bits.size != true_bits.size:
        raise ValueError("bit streams differ in length")
    if bits_per_frame < 1 or detected_bits.size % bits_per_frame:
        raise ValueError("bit count must split into whole frames")
    diffs = (detected_bits != true_bits).reshape(-1, bits_per_frame)
    bit_errors = int(diffs.sum())
    frame_errors = int(diffs.any(axis=1).sum())
    frames = diffs.shape[0]
    return ErrorCounts(
        ber=bit_errors / diffs.size,
        fer=frame_errors / frames,
        bit_errors=bit_errors,
        frame_errors=frame_errors,
        bits=diffs.size,
        frames=frames,
    )
