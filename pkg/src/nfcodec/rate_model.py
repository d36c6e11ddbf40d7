"""Quantized-Gaussian entropy model shared by the rate loss and the range coder.

A value v quantized with step delta is assigned the probability mass of its
bin under N(mu, sigma^2):

    q(v) = Phi((v - mu + delta/2) / sigma) - Phi((v - mu - delta/2) / sigma)

All log-probabilities are evaluated in log space on the lower tail, which keeps
both the value and its gradient finite far from the mean.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr

from .autodiff import Tensor

log = logging.getLogger(__name__)

DELTA_Z = 1.0
DELTA_Y = 1.0 / 16.0
INDEX_MIN = -(1 << 15)
INDEX_MAX = (1 << 15) - 1
PROB_FLOOR = 2.0 ** -64
LOG_PROB_FLOOR = -64.0 * math.log(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class GaussianModelParams:
    mu_z: float
    sigma_z: float
    mu_y: float
    sigma_y: float
    delta_z: float = DELTA_Z
    delta_y: float = DELTA_Y

    def __post_init__(self):
        if not (self.sigma_z > 0 and self.sigma_y > 0):
            raise ValueError("scales must be positive")

    def to_f32(self) -> "GaussianModelParams":
        """Round the four transmitted values through IEEE single precision."""
        f = [float(np.float32(v)) for v in (self.mu_z, self.sigma_z, self.mu_y, self.sigma_y)]
        return GaussianModelParams(*f, delta_z=self.delta_z, delta_y=self.delta_y)

    def pack(self) -> bytes:
        return struct.pack("<4f", self.mu_z, self.sigma_z, self.mu_y, self.sigma_y)

    @classmethod
    def unpack(cls, raw: bytes) -> "GaussianModelParams":
        return cls(*(float(v) for v in struct.unpack("<4f", raw)))

    def side(self, which: str):
        """(mu, sigma, delta) for ``"z"`` or ``"y"``."""
        if which == "z":
            return self.mu_z, self.sigma_z, self.delta_z
        if which == "y":
            return self.mu_y, self.sigma_y, self.delta_y
        raise ValueError(which)


def _log_q_parts(v, mu, sigma, delta):
    d = np.abs(np.asarray(v, dtype=np.float64) - mu)
    hi = (0.5 * delta - d) / sigma
    lo = (-0.5 * delta - d) / sigma
    lh = log_ndtr(hi)
    ll = log_ndtr(lo)
    with np.errstate(divide="ignore"):
        logq = lh + np.log1p(-np.exp(ll - lh))
    return d, hi, lo, logq


def log_bin_probability(value, mu, sigma, delta):
    """Natural log of the bin mass, floored at log(2**-64)."""
    _, _, _, logq = _log_q_parts(value, mu, sigma, delta)
    return np.maximum(logq, LOG_PROB_FLOOR)


def bin_probability(value, mu, sigma, delta):
    if sigma <= 0 or delta <= 0:
        raise ValueError("sigma and delta must be positive")
    logq = log_bin_probability(value, mu, sigma, delta)
    return np.where(logq <= LOG_PROB_FLOOR, PROB_FLOOR, np.exp(logq))


def rate_loss(values: Tensor, mu: Tensor, log_sigma: Tensor, delta: float) -> Tensor:
    """Sum of -ln q over ``values`` (nats); differentiable in values, mu and log_sigma."""
    if values.data.size == 0:
        return Tensor.from_op(np.asarray(0.0), (values, mu, log_sigma),
                              lambda g: (np.zeros(values.shape), np.zeros(mu.shape),
                                         np.zeros(log_sigma.shape)))
    m = float(mu.data.reshape(-1)[0])
    sigma = math.exp(float(log_sigma.data.reshape(-1)[0]))
    vd = values.data
    d, hi, lo, logq = _log_q_parts(vd, m, sigma, delta)
    floored = ~(logq > LOG_PROB_FLOOR)
    logq = np.where(floored, LOG_PROB_FLOOR, logq)
    total = -logq.sum()

    def bw(g):
        g = float(np.reshape(g, -1)[0])
        d_hi = np.exp(-0.5 * hi * hi - _LOG_SQRT_2PI - logq)
        d_lo = -np.exp(-0.5 * lo * lo - _LOG_SQRT_2PI - logq)
        d_hi[floored] = 0.0
        d_lo[floored] = 0.0
        dlogq_dd = -(d_hi + d_lo) / sigma
        sign = np.sign(vd - m)
        gv = -g * sign * dlogq_dd
        gmu = -g * np.sum(-sign * dlogq_dd)
        gls = -g * np.sum(-hi * d_hi - lo * d_lo)
        return gv, np.full(mu.shape, gmu), np.full(log_sigma.shape, gls)

    return Tensor.from_op(np.asarray(total), (values, mu, log_sigma), bw)


def estimate_bits(indices, mu: float, sigma: float, delta: float) -> float:
    """Sum of -log2 q at the bin centres ``index * delta``."""
    idx = np.asarray(indices, dtype=np.float64)
    if idx.size == 0:
        return 0.0
    return float(-log_bin_probability(idx * delta, mu, sigma, delta).sum() / math.log(2.0))


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(values, delta: float) -> np.ndarray:
    """Integer bin indices round(value / delta), ties away from zero, clipped to int16 range."""
    idx = round_half_away(np.asarray(values, dtype=np.float64) / delta)
    n_clip = int(np.count_nonzero((idx < INDEX_MIN) | (idx > INDEX_MAX)))
    if n_clip:
        log.warning("clipping %d quantization indices to [%d, %d]", n_clip, INDEX_MIN, INDEX_MAX)
        idx = np.clip(idx, INDEX_MIN, INDEX_MAX)
    return idx.astype(np.int64)


def dequantize(indices, delta: float) -> np.ndarray:
    return np.asarray(indices, dtype=np.float64) * delta


def alphabet_range(mu: float, sigma: float, delta: float, max_half_width: int = 2047):
    """Index window [lo, hi] for a pmf table: centre round(mu/delta), half-width ~8 sigma.

    Derived only from the transmitted f32 parameters so encoder and decoder agree.
    """
    centre = int(round_half_away(mu / delta))
    half = int(math.ceil(8.0 * sigma / delta)) + 1
    half = max(1, min(half, max_half_width))
    lo = max(INDEX_MIN, centre - half)
    hi = min(INDEX_MAX, centre + half)
    if hi - lo < 2:
        if lo == INDEX_MIN:
            hi = lo + 2
        else:
            lo = hi - 2
    return lo, hi


def discrete_pmf_table(mu: float, sigma: float, delta: float, lo: int, hi: int) -> np.ndarray:
    """Bin masses for indices lo..hi; mass beyond either end is folded into the end bins."""
    if hi < lo:
        raise ValueError("empty index range")
    idx = np.arange(lo, hi + 1, dtype=np.float64)
    pmf = bin_probability(idx * delta, mu, sigma, delta)
    pmf[0] += ndtr((lo * delta - mu - 0.5 * delta) / sigma)
    pmf[-1] += ndtr(-((hi * delta - mu + 0.5 * delta) / sigma))
    return pmf / pmf.sum()
