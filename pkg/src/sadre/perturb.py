"""Noise samplers, masked latent injection and adaptive noise-level search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _rng
from .metrics import dssim
from .saliency import estimate_strength
from .transforms import Subbands

FAMILIES = ("laplace", "cauchy", "poisson")
DEFAULT_GRID = (0.05, 0.075, 0.10, 0.125, 0.15)
EPS0 = 1e-8


@dataclass(frozen=True)
class NoiseSpec:
    family: str = "laplace"
    sigma: float = 0.1
    seed: int = 0
    poisson_rate: float = 10.0

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}; choose from {FAMILIES}")
        object.__setattr__(self, "family", fam)
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not self.poisson_rate > 0:
            raise ValueError("poisson_rate must be > 0")


def sample_noise(shape, spec: NoiseSpec) -> np.ndarray:
    """I.i.d. zero-centred noise of scale ``spec.sigma``.

    laplace
        b = sigma/sqrt(2), so the variance is sigma**2 (inverse CDF).
    cauchy
        gamma = sigma (tan transform); no moments exist.
    poisson
        ``(P(lam) - lam) * sigma/sqrt(lam)``: centred, variance sigma**2.
    """
    g = _rng.stream(spec.seed, "noise", spec.family)
    s = spec.sigma
    if spec.family in ("laplace", "cauchy"):
        # open interval (0, 1) so neither transform hits its pole
        u = g.random(shape)
        u = np.where(u == 0.0, 2.0**-54, u)
    if spec.family == "laplace":
        c = u - 0.5
        b = s / math.sqrt(2.0)
        return -b * np.sign(c) * np.log1p(-2.0 * np.abs(c))
    if spec.family == "cauchy":
        return s * np.tan(np.pi * (u - 0.5))
    lam = spec.poisson_rate
    return (g.poisson(lam, size=shape) - lam) * (s / math.sqrt(lam))


def sample_latent_noise(z: Subbands, spec: NoiseSpec) -> Subbands:
    """Noise for every detail band of ``z`` (LL slot is zero), drawn as one flat stream."""
    details = z.detail_arrays()
    flat = sample_noise(sum(a.size for a in details), spec)
    out = [np.zeros_like(z.ll)]
    pos = 0
    for a in details:
        out.append(flat[pos : pos + a.size].reshape(a.shape))
        pos += a.size
    return Subbands.from_arrays(out)


def upsample_mask(mask: np.ndarray, z: Subbands) -> Subbands:
    """Nearest-neighbour copies of ``mask`` at every band's resolution."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != z.ll.shape:
        raise ValueError(f"mask geometry {mask.shape} does not match latent LL {z.ll.shape}")
    arrays = [mask]
    for level in range(1, z.levels + 1):
        f = 1 << (z.levels - level)
        up = np.repeat(np.repeat(mask, f, axis=0), f, axis=1) if f > 1 else mask
        arrays.extend([up, up, up])
    return Subbands.from_arrays(arrays)


def inject(z: Subbands, mask, noise) -> Subbands:
    """``z + M * eta`` on detail bands; LL and zero-mask coefficients are untouched.

    ``noise`` is either a :class:`NoiseSpec` or a latent-shaped ``eta``.
    """
    eta = sample_latent_noise(z, noise) if isinstance(noise, NoiseSpec) else noise
    m = upsample_mask(mask, z)
    out = [z.ll.copy()]
    for zb, mb, eb in zip(z.detail_arrays(), m.detail_arrays(), eta.detail_arrays()):
        if eb.shape != zb.shape:
            raise ValueError(f"noise band {eb.shape} does not match latent band {zb.shape}")
        out.append(np.where(mb == 0.0, zb, zb + mb * eb))
    return Subbands.from_arrays(out)


@dataclass(frozen=True)
class SigmaSearchConfig:
    grid: tuple[float, ...] = DEFAULT_GRID
    lambda_w: float = 0.1
    mode: str = "blind"

    def __post_init__(self):
        grid = tuple(float(g) for g in self.grid)
        object.__setattr__(self, "grid", grid)
        if not grid:
            raise ValueError("sigma grid must not be empty")
        if any(not 0 < g < 1 for g in grid):
            raise ValueError("sigma grid values must lie in (0, 1)")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("sigma grid must be strictly increasing")
        if self.lambda_w < 0:
            raise ValueError("lambda_w must be >= 0")
        if self.mode not in ("oracle", "blind"):
            raise ValueError("mode must be 'oracle' or 'blind'")


@dataclass
class SigmaSearch:
    """Outcome of :func:`select_sigma`: the chosen level and every objective value."""

    sigma: float
    objectives: list[tuple[float, float]] = field(default_factory=list)


def select_sigma(x_w, search: SigmaSearchConfig, pipeline: Callable[[float], np.ndarray],
                 detector: Callable[[np.ndarray], float] | None = None) -> SigmaSearch:
    """Grid argmin of ``Detectability + lambda_w * Distortion``.

    ``pipeline(sigma)`` runs the full attack and returns the attacked plane.
    In oracle mode ``detector(x_hat)`` returns bit recovery accuracy and
    detectability is ``2|BRA - 0.5|``. In blind mode detectability is the
    strength-estimate ratio ``tau(x_hat) / tau(x_w)`` clamped to [0, 1].
    Distortion is DSSIM(x_w, x_hat). Ties within 1e-12 keep the smaller sigma.
    """
    if search.mode == "oracle" and detector is None:
        raise ValueError("oracle sigma search needs a detector")
    tau_w = estimate_strength(x_w) if search.mode == "blind" else None

    best_sigma, best_j = None, math.inf
    objectives = []
    for sigma in search.grid:
        x_hat = pipeline(sigma)
        if search.mode == "oracle":
            det = 2.0 * abs(detector(x_hat) - 0.5)
        else:
            det = min(1.0, max(0.0, estimate_strength(x_hat) / max(tau_w, EPS0)))
        j = det + search.lambda_w * dssim(x_w, x_hat)
        objectives.append((sigma, j))
        if j < best_j - 1e-12:
            best_sigma, best_j = sigma, j
    return SigmaSearch(sigma=best_sigma, objectives=objectives)

