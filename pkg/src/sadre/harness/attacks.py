"""Baseline attacks: simulated JPEG compression and unmasked regeneration."""

from __future__ import annotations

import numpy as np

from ..diffusion import AttackConfig, AttackPipeline, Denoiser, Schedule, encode, reconstruct
from ..perturb import NoiseSpec, inject, sample_latent_noise
from ..pixelio import as_plane, crop, pad_to_multiple
from ..transforms import blockify, dct2, idct2, unblockify

# ITU-T T.81 Annex K luminance table
JPEG_LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int64,
)


def quant_table(quality: int) -> np.ndarray:
    """libjpeg quality scaling of the standard luminance table."""
    if not 1 <= quality <= 100:
        raise ValueError(f"JPEG quality must be in 1..100, got {quality}")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    return np.clip((JPEG_LUMA * scale + 50) // 100, 1, 255)


def jpeg_attack(x, quality: int = 50) -> np.ndarray:
    """Block-DCT quantize/dequantize round trip of a luminance plane.

    Pixels are mapped to level-shifted 0..255 units; the orthonormal 8x8
    DCT equals the JPEG FDCT there. The decoded plane is rounded back to
    8-bit levels, as a real decoder would.
    """
    q = quant_table(quality).astype(np.float64)
    x = as_plane(x)
    h, w = x.shape
    xp = pad_to_multiple(x, 8)
    blocks = blockify(xp * 255.0 - 128.0)
    coeffs = dct2(blocks)
    coeffs = np.round(coeffs / q) * q
    out = unblockify(idct2(coeffs)) + 128.0
    out = np.clip(np.round(out), 0.0, 255.0) / 255.0
    return crop(out, h, w)


def regen_attack(x_w, sigma: float, sched: Schedule, den: Denoiser,
                 seed: int = 0, family: str = "laplace", poisson_rate: float = 10.0) -> np.ndarray:
    """Unmasked ablation: inject everywhere, reverse-diffuse everywhere."""
    x_w = as_plane(x_w)
    h, w = x_w.shape

    z = encode(pad_to_multiple(x_w, 8))
    ones = np.ones_like(z.ll)
    eta = sample_latent_noise(z, NoiseSpec(family, sigma, seed, poisson_rate))
    out = reconstruct(inject(z, ones, eta), ones, sigma, sched, den)
    return crop(out, h, w)


def regen_from_config(x_w, sigma: float, cfg: AttackConfig) -> np.ndarray:
    """Regeneration at ``sigma`` with the same schedule/denoiser/noise as ``cfg``."""
    pipe = AttackPipeline(x_w, AttackConfig(**{**cfg.__dict__, "mask_mode": "ones"}))
    return pipe.run(sigma)
