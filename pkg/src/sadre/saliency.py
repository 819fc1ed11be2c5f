"""Blind saliency mask and watermark-strength estimate.

Both statistics look at 8x8 DCT tiles of the finest Haar detail bands,
where the benchmark embedders (and most spread-spectrum marks) put their
energy. A tile there covers 16x16 pixels, so the tile grid is half the
mask geometry (one weight per coarsest-level LL coefficient of the
3-level latent) and is upsampled by 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .pixelio import as_plane, pad_to_multiple
from .transforms import MID_COLS, MID_ROWS, blockify, dct2, haar_dwt2

EPS0 = 1e-8
MIN_SIDE = 64


@dataclass(frozen=True)
class SaliencyConfig:
    lo_pct: float = 50.0
    hi_pct: float = 95.0
    kappa: float = 1.0
    levels: int = 3

    def __post_init__(self):
        if not 0 <= self.lo_pct <= self.hi_pct <= 100:
            raise ValueError("need 0 <= lo_pct <= hi_pct <= 100")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")


def _check(x) -> np.ndarray:
    x = as_plane(x)
    if min(x.shape) < MIN_SIDE:
        raise ValueError(f"plane {x.shape[1]}x{x.shape[0]} below minimum {MIN_SIDE}x{MIN_SIDE}")
    return x


def _detail_tiles(x: np.ndarray) -> np.ndarray:
    """DCT tiles of LH1, HL1, HH1: shape ``(3, rows, cols, 8, 8)``."""
    sb = haar_dwt2(pad_to_multiple(x, 16), 1)
    return np.stack([dct2(blockify(band)) for band in sb.details[0]])


def tile_ratios(x) -> np.ndarray:
    """Per-tile mid-band share of AC energy, maximised over the three orientations."""
    tiles = _detail_tiles(_check(x))
    energy = tiles * tiles
    mid = energy[..., MID_ROWS, MID_COLS].sum(axis=-1)
    ac = energy.sum(axis=(-2, -1)) - energy[..., 0, 0]
    return (mid / (ac + EPS0)).max(axis=0)


def smoothstep(r: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi <= lo:
        return (r > lo).astype(np.float64)
    t = np.clip((r - lo) / (hi - lo), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def mask_shape(shape, levels: int = 3) -> tuple[int, int]:
    m = 1 << levels
    return -(-shape[0] // m), -(-shape[1] // m)


def estimate_saliency(x_w, cfg: SaliencyConfig = SaliencyConfig()) -> np.ndarray:
    """Soft mask in [0, 1] on the coarsest latent grid (``ceil(H/8) x ceil(W/8)``)."""
    x_w = _check(x_w)
    r = tile_ratios(x_w)
    lo, hi = np.percentile(r, [cfg.lo_pct, cfg.hi_pct])
    m = smoothstep(r, lo, hi)
    # tiles span 16 px; the latent LL grid spans 2**levels px
    factor = 16 >> cfg.levels if cfg.levels <= 4 else None
    if factor is None or factor < 1:
        raise ValueError("saliency supports latents of at most 4 levels")
    m = np.repeat(np.repeat(m, factor, axis=0), factor, axis=1)
    h, w = mask_shape(x_w.shape, cfg.levels)
    return np.ascontiguousarray(m[:h, :w])


def _mid_band_level(x: np.ndarray) -> float:
    tiles = _detail_tiles(x)
    return float(np.mean(np.abs(tiles[..., MID_ROWS, MID_COLS])))


def estimate_strength(x_w, kappa: float = 1.0) -> float:
    """``max(0, B_mid(x_w) - kappa * B_mid(box3(x_w)))``.

    ``B_mid`` is the mean absolute mid-band coefficient of the detail
    tiles; subtracting the blurred copy cancels much of the natural
    texture baseline.
    """
    x_w = _check(x_w)
    blurred = ndimage.uniform_filter(x_w, size=3, mode="reflect")
    return max(0.0, _mid_band_level(x_w) - kappa * _mid_band_level(blurred))
