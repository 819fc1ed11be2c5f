"""Corpus management: loading a local image directory and a synthetic fallback.

The synthetic generator is a dead-leaves model (occluding disks with a
power-law size law) plus low-amplitude 1/f texture and a lens blur. It
reproduces the edge/flat-region mix and roughly scale-invariant spectra
of natural photographs, which is what the embedders and the attack care
about.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .. import _rng
from ..pixelio import ImageFormatError, load_image, save_image, to_luma

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pgm", ".ppm", ".png")


@dataclass
class CorpusImage:
    name: str
    plane: np.ndarray


def fit_to_size(p: np.ndarray, size: int) -> np.ndarray:
    """Bilinear upscale if a side is short, then center-crop to ``size``."""
    h, w = p.shape
    if min(h, w) < size:
        f = size / min(h, w)
        p = ndimage.zoom(p, f, order=1, mode="nearest", grid_mode=True)
        h, w = p.shape
        # zoom rounds the output shape; guard against an off-by-one short side
        if min(h, w) < size:
            p = np.pad(p, ((0, max(0, size - h)), (0, max(0, size - w))), mode="edge")
            h, w = p.shape
    top = (h - size) // 2
    left = (w - size) // 2
    return np.clip(p[top : top + size, left : left + size], 0.0, 1.0).copy()


def load_corpus(corpus_dir, size: int, limit: int | None = None):
    """Load every supported image in ``corpus_dir`` (sorted by name).

    Returns ``(images, skipped)`` where ``skipped`` lists unreadable files.
    """
    root = Path(corpus_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    images, skipped = [], []
    for f in files:
        if limit is not None and len(images) >= limit:
            break
        try:
            plane = to_luma(load_image(f))
        except ImageFormatError as exc:
            log.warning("skipping %s: %s", f.name, exc)
            skipped.append(f.name)
            continue
        images.append(CorpusImage(f.stem, fit_to_size(plane, size)))
    if not images:
        raise ValueError(f"corpus {root} has no readable images")
    return images, skipped


def _pink_noise(rng: np.random.Generator, size: int, exponent: float) -> np.ndarray:
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.rfftfreq(size)[None, :]
    f = np.sqrt(fx * fx + fy * fy)
    f[0, 0] = 1.0
    spec = (rng.normal(size=f.shape) + 1j * rng.normal(size=f.shape)) / f ** (exponent / 2)
    spec[0, 0] = 0.0
    field = np.fft.irfft2(spec, s=(size, size))
    return field / (field.std() + 1e-12)


def synth_image(seed: int, index: int, size: int = 256) -> np.ndarray:
    """One dead-leaves test image in [0, 1]."""
    rng = _rng.stream(seed, "synth", index)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    # smooth illumination background
    gx, gy = rng.uniform(-0.3, 0.3, size=2)
    img = rng.uniform(0.3, 0.7) + gx * (xx / size - 0.5) + gy * (yy / size - 0.5)

    tex = _pink_noise(rng, size, 2.0)
    rmin, rmax = 4.0, size / 2.0
    n_disks = int(rng.integers(150, 1200))
    # r ~ r^-3 between rmin and rmax (inverse-CDF draw); later leaves occlude
    u = rng.random(n_disks)
    radii = 1.0 / np.sqrt(1.0 / rmin**2 - u * (1.0 / rmin**2 - 1.0 / rmax**2))
    for r in radii:
        cx, cy = rng.uniform(-r, size + r, size=2)
        x0, x1 = int(max(0, cx - r)), int(min(size, cx + r + 1))
        y0, y1 = int(max(0, cy - r)), int(min(size, cy + r + 1))
        if x0 >= x1 or y0 >= y1:
            continue
        sub_x = xx[y0:y1, x0:x1]
        sub_y = yy[y0:y1, x0:x1]
        inside = (sub_x - cx) ** 2 + (sub_y - cy) ** 2 <= r * r
        if rng.random() < 0.3:
            level = rng.uniform(0.05, 0.95)
        else:
            # most leaves stay near the local tone, as in photographs
            iy, ix = int(np.clip(cy, 0, size - 1)), int(np.clip(cx, 0, size - 1))
            level = float(np.clip(img[iy, ix] + rng.normal(scale=0.12), 0.05, 0.95))
        slope = rng.normal(scale=0.15 / max(r, 4.0), size=2)
        shade = level + slope[0] * (sub_x - cx) + slope[1] * (sub_y - cy)
        if r > 8 and rng.random() < 0.3:
            # textured leaf: grating or a patch of 1/f noise
            if rng.random() < 0.5:
                freq = rng.uniform(0.05, 0.35)
                theta = rng.uniform(0, np.pi)
                phase = (sub_x * np.cos(theta) + sub_y * np.sin(theta)) * 2 * np.pi * freq
                shade = shade + rng.uniform(0.02, 0.12) * np.sin(phase)
            else:
                shade = shade + rng.uniform(0.02, 0.08) * tex[y0:y1, x0:x1]
        img[y0:y1, x0:x1] = np.where(inside, shade, img[y0:y1, x0:x1])

    texture_amp = rng.uniform(0.005, 0.03)
    img = img + texture_amp * _pink_noise(rng, size, rng.uniform(1.6, 2.4))
    img = ndimage.gaussian_filter(img, rng.uniform(0.5, 1.1), mode="reflect")
    return np.clip(img, 0.0, 1.0)


def synth_corpus(n: int, size: int = 256, seed: int = 0, start: int = 0) -> list[CorpusImage]:
    return [CorpusImage(f"synth_{seed}_{i:03d}", synth_image(seed, i, size)) for i in range(start, start + n)]


def write_synth_corpus(out_dir, n: int, size: int = 256, seed: int = 0, start: int = 0) -> list[Path]:
    """Materialize a synthetic corpus as 8-bit PGM files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for item in synth_corpus(n, size, seed, start):
        path = out / f"{item.name}.pgm"
        save_image(item.plane, path)
        paths.append(path)
    return paths
