"""Blind DWT-DCT baseline watermarkers.

Both methods work on the HL band of a one-level Haar transform, cut into
8x8 blocks. Blocks are dealt to payload bits round-robin after a seeded
shuffle, and extraction takes a per-bit majority vote (ties go to 0).

``dwtdct``
    additive spread spectrum: +-k times a per-block +-1 PN sequence over
    the 12 zig-zag mid-band DCT coefficients.
``dwtdctsvd``
    quantization index modulation of the largest singular value of each
    block's DCT: even multiples of the step carry 0, odd multiples 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .pixelio import as_plane
from .transforms import (
    MID_COLS,
    MID_ROWS,
    blockify,
    dct2,
    haar_dwt2,
    haar_idwt2,
    idct2,
    svd_small,
    unblockify,
)

METHODS = ("dwtdct", "dwtdctsvd")
DEFAULT_STRENGTH = {"dwtdct": 0.04, "dwtdctsvd": 0.12}
MIN_SIDE = 64
_REGION = 16  # one 8x8 HL block covers a 16x16 pixel region


def _canon_method(method: str) -> str:
    m = method.lower().replace("_", "").replace("-", "")
    if m not in METHODS:
        raise ValueError(f"unknown watermark method {method!r}; choose from {METHODS}")
    return m


@dataclass(frozen=True)
class Payload:
    bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) < 1:
            raise ValueError("payload must hold at least one bit")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("payload bits must be 0 or 1")

    def __len__(self) -> int:
        return len(self.bits)

    @classmethod
    def random(cls, n: int, seed: int) -> "Payload":
        bits = _rng.stream(seed, "payload").integers(0, 2, size=n)
        return cls(tuple(int(b) for b in bits))

    @classmethod
    def from_hex(cls, text: str, length: int | None = None) -> "Payload":
        """Parse MSB-first hex; ``length`` keeps only the leading bits."""
        text = text.strip().lower()
        if text.startswith("0x"):
            text = text[2:]
        if not text or any(ch not in "0123456789abcdef" for ch in text):
            raise ValueError(f"invalid hex payload {text!r}")
        bits = []
        for ch in text:
            v = int(ch, 16)
            bits.extend((v >> s) & 1 for s in (3, 2, 1, 0))
        if length is not None:
            if length > len(bits):
                raise ValueError(f"hex payload has {len(bits)} bits, need {length}")
            bits = bits[:length]
        return cls(tuple(bits))

    def to_hex(self) -> str:
        bits = list(self.bits) + [0] * ((-len(self.bits)) % 4)
        out = []
        for i in range(0, len(bits), 4):
            v = bits[i] << 3 | bits[i + 1] << 2 | bits[i + 2] << 1 | bits[i + 3]
            out.append("0123456789abcdef"[v])
        return "".join(out)

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.int64)


@dataclass(frozen=True)
class EmbedConfig:
    method: str = "dwtdct"
    strength: float | None = None
    seed: int = 0
    payload_len: int = 32
    _strength: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        method = _canon_method(self.method)
        object.__setattr__(self, "method", method)
        s = DEFAULT_STRENGTH[method] if self.strength is None else float(self.strength)
        # zero strength is a legal no-op for additive spread spectrum only
        if not np.isfinite(s) or s < 0 or (s == 0 and method == "dwtdctsvd"):
            raise ValueError(f"strength must be > 0 for {method} (got {s})")
        object.__setattr__(self, "_strength", s)
        if self.payload_len < 1:
            raise ValueError("payload_len must be >= 1")

    @property
    def k(self) -> float:
        return self._strength


def _region(shape) -> tuple[int, int]:
    h, w = shape
    if h < MIN_SIDE or w < MIN_SIDE:
        raise ValueError(f"image {w}x{h} is too small; minimum is {MIN_SIDE}x{MIN_SIDE}")
    return h - h % _REGION, w - w % _REGION


def _hl_blocks(x: np.ndarray, cfg: EmbedConfig):
    rh, rw = _region(x.shape)
    sb = haar_dwt2(x[:rh, :rw], 1)
    blocks = blockify(sb.details[0][1])
    nblocks = blocks.shape[0] * blocks.shape[1]
    if nblocks < cfg.payload_len:
        side = int(np.ceil(np.sqrt(cfg.payload_len))) * _REGION
        raise ValueError(
            f"image too small for a {cfg.payload_len}-bit payload: HL band holds {nblocks} "
            f"8x8 blocks; minimum size is about {max(side, MIN_SIDE)}x{max(side, MIN_SIDE)}"
        )
    return sb, blocks, (rh, rw)


def block_assignment(nblocks: int, cfg: EmbedConfig) -> np.ndarray:
    """Bit index carried by each block (flat row-major block order)."""
    perm = _rng.stream(cfg.seed, "assign").permutation(nblocks)
    owner = np.empty(nblocks, dtype=np.int64)
    owner[perm] = np.arange(nblocks) % cfg.payload_len
    return owner


def pn_sequences(nblocks: int, seed: int) -> np.ndarray:
    """``(nblocks, 12)`` +-1 chips; block ``i`` draws from stream (seed, i)."""
    out = np.empty((nblocks, len(MID_ROWS)))
    for i in range(nblocks):
        out[i] = _rng.stream(seed, "pn", i).integers(0, 2, size=len(MID_ROWS)) * 2.0 - 1.0
    return out


REPAIR_PASSES = 3


def _mark_blocks(coeffs: np.ndarray, bits: np.ndarray, cfg: EmbedConfig, pn, repair: bool) -> bool:
    """Write the mark into block DCTs in place; returns False when nothing needed changing.

    DwtDct is informed spread spectrum: each block gets amplitude ``k``,
    plus whatever host projection points against its bit, so every block
    correlates with margin >= k. Repair passes (after clipping) only top
    up blocks whose margin fell below k/2. DwtDctSvd snaps sigma_1 onto the
    parity lattice; repair passes re-snap blocks that drifted > step/4.
    """
    k = cfg.k
    if cfg.method == "dwtdct":
        sign = 2.0 * bits - 1.0
        margin = sign * np.sum(coeffs[:, MID_ROWS, MID_COLS] * pn, axis=1) / pn.shape[1]
        if repair:
            amp = np.where(margin < k / 2, k - margin, 0.0)
        else:
            amp = k + np.maximum(0.0, -margin)
        if not amp.any():
            return False
        coeffs[:, MID_ROWS, MID_COLS] += (amp * sign)[:, None] * pn
        return True
    u, s, vt = svd_small(coeffs)
    s1 = s[:, 0]
    target = _qim_targets(s, bits, k)
    if repair:
        q = np.round(s1 / k)
        ok = ((q.astype(np.int64) % 2) == bits) & (np.abs(s1 - q * k) <= k / 4)
        if ok.all():
            return False
        target = np.where(ok, s1, target)
    coeffs += (target - s1)[:, None, None] * (u[:, :, :1] @ vt[:, :1, :])
    return True


def embed(x, payload: Payload, cfg: EmbedConfig) -> np.ndarray:
    """Embed ``payload`` into the luminance plane ``x``; returns ``x_w``.

    Zero strength is the identity. Clipping to [0, 1] can eat into the
    mark near saturated pixels, so up to ``REPAIR_PASSES`` extra passes
    re-mark only the blocks that lost their margin.
    """
    x = as_plane(x)
    if len(payload) != cfg.payload_len:
        raise ValueError(f"payload has {len(payload)} bits, config expects {cfg.payload_len}")
    _hl_blocks(x, cfg)  # size check before the zero-strength shortcut
    if cfg.k == 0:
        return x.copy()
    out = x
    for npass in range(1 + REPAIR_PASSES):
        sb, blocks, (rh, rw) = _hl_blocks(out, cfg)
        br, bc = blocks.shape[:2]
        flat = blocks.reshape(br * bc, 8, 8)
        bits = payload.as_array()[block_assignment(flat.shape[0], cfg)]
        pn = pn_sequences(flat.shape[0], cfg.seed) if cfg.method == "dwtdct" else None
        coeffs = dct2(flat)
        if not _mark_blocks(coeffs, bits, cfg, pn, repair=npass > 0):
            break
        hl = unblockify(idct2(coeffs).reshape(br, bc, 8, 8))
        lh, _, hh = sb.details[0]
        sb.details[0] = (lh, hl, hh)
        out = out.copy()
        out[:rh, :rw] = haar_idwt2(sb)
        out = np.clip(out, 0.0, 1.0)
    return out


def _qim_targets(s: np.ndarray, bits: np.ndarray, step: float) -> np.ndarray:
    """Nearest multiple of ``step`` with parity ``bits`` that stays >= sigma_2."""
    s1 = s[:, 0]
    floor2 = s[:, 1] if s.shape[1] > 1 else np.zeros_like(s1)
    k = np.round(s1 / step).astype(np.int64)
    wrong = (k % 2) != bits
    # step to the closer neighbour of the right parity
    up = (s1 / step) >= k
    k = np.where(wrong, np.where(up, k + 1, k - 1), k)
    k = np.where(k < 0, k + 2, k)
    low = k * step < floor2
    while low.any():
        k = np.where(low, k + 2, k)
        low = k * step < floor2
    return k * step


def extract(x_w, cfg: EmbedConfig) -> Payload:
    """Blind extraction: only the config (method, seed, strength) is needed."""
    x_w = as_plane(x_w)
    _, blocks, _ = _hl_blocks(x_w, cfg)
    flat = blocks.reshape(-1, 8, 8)
    owner = block_assignment(flat.shape[0], cfg)
    coeffs = dct2(flat)

    if cfg.method == "dwtdct":
        pn = pn_sequences(flat.shape[0], cfg.seed)
        corr = np.sum(coeffs[:, MID_ROWS, MID_COLS] * pn, axis=1)
        votes = (corr > 0).astype(np.int64)
    else:
        s = svd_small(coeffs)[1][:, 0]
        votes = np.round(s / cfg.k).astype(np.int64) % 2

    ones = np.bincount(owner, weights=votes, minlength=cfg.payload_len)
    total = np.bincount(owner, minlength=cfg.payload_len)
    bits = (2 * ones > total).astype(int)
    return Payload(tuple(int(b) for b in bits))


def bra(recovered: Payload, original: Payload) -> float:
    """Bit recovery accuracy: fraction of matching positions."""
    if len(recovered) != len(original):
        raise ValueError(f"payload length mismatch: {len(recovered)} vs {len(original)}")
    a = recovered.as_array()
    b = original.as_array()
    return float(np.mean(a == b))
