"""Fidelity and verification metrics.

PSNR/SSIM/DSSIM, exact 1-D Wasserstein on intensity marginals, the
composite fidelity score ``D = alpha*W_p + beta*DSSIM``, the Gaussian
Type-I/Type-II trade-off bound, the reconstruction error bound and the
perceptual-disruption trade-off check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np
from scipy import ndimage

_STD_NORMAL = NormalDist()

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"geometry mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    a, b = _same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable correlation keeping only fully-covered window positions."""
    r = len(g) // 2
    out = ndimage.correlate1d(img, g, axis=0, mode="constant")
    out = ndimage.correlate1d(out, g, axis=1, mode="constant")
    return out[r:-r, r:-r]


def ssim_map(a, b, data_range: float = 1.0) -> np.ndarray:
    a, b = _same_shape(a, b)
    if a.ndim != 2:
        raise ValueError("ssim expects 2-D planes")
    if min(a.shape) < SSIM_WIN:
        raise ValueError(f"ssim needs both sides >= {SSIM_WIN}, got {a.shape}")
    g = _gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    # variances as E[x^2] - mu^2; clamp tiny negatives from cancellation
    var_a = np.maximum(_filter_valid(a * a, g) - mu_a * mu_a, 0.0)
    var_b = np.maximum(_filter_valid(b * b, g) - mu_b * mu_b, 0.0)
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b) -> float:
    """Mean SSIM, 11x11 Gaussian window (std 1.5), K1=0.01, K2=0.03, L=1."""
    return float(np.mean(ssim_map(a, b)))


def dssim(a, b) -> float:
    return float(np.clip((1.0 - ssim(a, b)) / 2.0, 0.0, 1.0))


def wasserstein(a, b, p: int = 1) -> float:
    """Exact W_p between the empirical intensity distributions of two planes."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size != b.size:
        raise ValueError(f"pixel count mismatch: {a.size} vs {b.size}")
    d = np.abs(a - b)
    if p == 1:
        return float(np.mean(d))
    return float(np.sqrt(np.mean(d * d)))


@dataclass(frozen=True)
class FidelityWeights:
    alpha: float = 0.85
    beta: float = 0.75

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or (self.alpha == 0 and self.beta == 0):
            raise ValueError("weights must be non-negative and not both zero")


def composite_d(wp: float, ds: float, w: FidelityWeights = FidelityWeights()) -> float:
    if wp < 0 or ds < 0:
        raise ValueError("W_p and DSSIM must be non-negative")
    return w.alpha * wp + w.beta * ds


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def norm_ppf(p: float) -> float:
    return _STD_NORMAL.inv_cdf(p)


def type2_bound(eps1: float, delta: float, sigma: float) -> float:
    """Lower bound on the miss rate: ``Phi(Phi^-1(1 - eps1) - delta/sigma)``."""
    if not 0.0 < eps1 < 1.0:
        raise ValueError(f"eps1 must lie in (0, 1), got {eps1}")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    return norm_cdf(norm_ppf(1.0 - eps1) - delta / sigma)


@dataclass(frozen=True)
class BoundInputs:
    delta: float = 0.0
    delta_m: float = 0.0
    sigma: float = 0.1
    c: float = 1.0
    alpha_h: float = 1.0
    eps1: float = 0.05

    def __post_init__(self):
        if self.delta < 0 or self.delta_m < 0:
            raise ValueError("gaps must be non-negative")
        if self.sigma <= 0 or self.c <= 0:
            raise ValueError("sigma and C must be > 0")
        if not 0 < self.alpha_h <= 1:
            raise ValueError("alpha_h must lie in (0, 1]")
        if not 0 < self.eps1 < 1:
            raise ValueError("eps1 must lie in (0, 1)")


def error_bound_rhs(inp: BoundInputs, k_sigma: float) -> float:
    """``C * Delta_M**alpha_h + k_sigma * sigma``; the O(sigma) term is calibrated."""
    return inp.c * inp.delta_m**inp.alpha_h + k_sigma * inp.sigma


@dataclass(frozen=True)
class TradeoffResult:
    lhs: float
    rhs: float
    holds: bool
    delta_m: float
    wp: float
    dssim: float


def tradeoff_lhs(x, x_w, w: FidelityWeights = FidelityWeights(), p: int = 1) -> tuple[float, float, float]:
    wp = wasserstein(x, x_w, p)
    ds = dssim(x, x_w)
    return composite_d(wp, ds, w), wp, ds


def tradeoff_check(x, x_w, mask, sigma: float, w: FidelityWeights = FidelityWeights(),
                   cert=None, k_sigma: float = 0.0, p: int = 1) -> TradeoffResult:
    """Evaluate both sides of ``alpha W_p + beta DSSIM <= Delta_M^a / sigma + k sigma``.

    ``Delta_M`` is the masked latent gap between the clean and watermarked
    planes, so this check needs the clean reference and is harness-only.
    """
    from .diffusion import LEVELS, HolderCert, encode, masked_norm
    from .pixelio import pad_to_multiple

    x, x_w = _same_shape(x, x_w)
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    cert = cert or HolderCert()
    lhs, wp, ds = tradeoff_lhs(x, x_w, w, p)
    m = 1 << LEVELS
    delta_m = masked_norm(encode(pad_to_multiple(x_w, m)), encode(pad_to_multiple(x, m)), mask)
    rhs = delta_m**cert.alpha_h / sigma + k_sigma * sigma
    return TradeoffResult(lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs), delta_m=delta_m, wp=wp, dssim=ds)


def calibrate_k_sigma(samples, alpha_h: float = 1.0, safety: float = 1.1) -> float:
    """Smallest slope making the trade-off hold on calibration samples, times ``safety``.

    ``samples`` are ``(lhs, delta_m, sigma)`` triples.
    """
    slopes = [(lhs - dm**alpha_h / s) / s for lhs, dm, s in samples]
    if not slopes:
        raise ValueError("no calibration samples")
    return max(0.0, max(slopes)) * safety
