"""Image I/O and plane helpers.

A *plane* is a 2-D float64 array of intensities in [0, 1]; an RGB image
is an ``(H, W, 3)`` float64 array with the same range. Binary PGM/PPM
(maxval 255) are the bit-exact reference formats. 8-bit PNG goes through
Pillow.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class ImageFormatError(ValueError):
    """Raised for unreadable or unsupported image files."""


def as_plane(data, clamp: bool = False) -> np.ndarray:
    """Validate ``data`` as a plane and return a float64 copy."""
    p = np.array(data, dtype=np.float64)
    if p.ndim != 2 or p.size == 0:
        raise ValueError(f"plane must be a non-empty 2-D array, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("plane contains non-finite values")
    if clamp:
        np.clip(p, 0.0, 1.0, out=p)
    return p


def _quantize(a: np.ndarray) -> np.ndarray:
    # clamp, then round half up
    return np.floor(np.clip(a, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


# --- PNM -----------------------------------------------------------------

def _read_pnm(raw: bytes, path) -> np.ndarray:
    magic = raw[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"{path}: not a binary PGM/PPM file (magic {magic!r})")
    channels = 1 if magic == b"P5" else 3
    fmt = "PGM (P5)" if channels == 1 else "PPM (P6)"

    fields = []
    pos = 2
    n = len(raw)
    while len(fields) < 3:
        while pos < n and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos : pos + 1] == b"#":
            while pos < n and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and raw[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: truncated or malformed {fmt} header")
        fields.append(int(raw[start:pos]))
    if pos >= n or not raw[pos : pos + 1].isspace():
        raise ImageFormatError(f"{path}: truncated or malformed {fmt} header")
    pos += 1  # exactly one whitespace byte after maxval

    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ImageFormatError(f"{path}: invalid {fmt} geometry {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"{path}: unsupported {fmt} bit depth (maxval {maxval}, need 255)")
    need = width * height * channels
    body = raw[pos : pos + need]
    if len(body) < need:
        raise ImageFormatError(f"{path}: truncated {fmt} pixel data ({len(body)} of {need} bytes)")
    arr = np.frombuffer(body, dtype=np.uint8).astype(np.float64) / 255.0
    if channels == 1:
        arr = arr.reshape(height, width)
        return np.repeat(arr[:, :, None], 3, axis=2)
    return arr.reshape(height, width, 3)


def _write_pnm(q: np.ndarray, path) -> None:
    magic = b"P5" if q.ndim == 2 else b"P6"
    h, w = q.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(q).tobytes())


# --- public API ----------------------------------------------------------

def load_image(path) -> np.ndarray:
    """Load PGM/PPM/PNG as an ``(H, W, 3)`` float array in [0, 1].

    Grayscale sources are replicated into all three channels.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"{path}: cannot read file ({exc.strerror})") from exc
    if raw[:2] in (b"P5", b"P6"):
        return _read_pnm(raw, path)
    if raw[:8] == b"\x89PNG\r\n\x1a\n":
        return _read_png(path)
    if raw[:1] == b"P" and raw[1:2] in b"123467":
        raise ImageFormatError(f"{path}: unsupported PNM variant {raw[:2]!r} (only binary P5/P6)")
    raise ImageFormatError(f"{path}: unsupported image format (expected PGM P5, PPM P6 or PNG)")


def _read_png(path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I", "F"):
                raise ImageFormatError(f"{path}: unsupported PNG bit depth (mode {mode}; 8-bit only)")
            if mode == "L":
                arr = np.asarray(im, dtype=np.float64) / 255.0
                return np.repeat(arr[:, :, None], 3, axis=2)
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except ImageFormatError:
        raise
    except Exception as exc:  # Pillow raises a zoo of types on bad data
        raise ImageFormatError(f"{path}: unreadable PNG ({exc})") from exc
    return arr


def save_image(img, path) -> None:
    """Write a plane as PGM (or gray PNG) and RGB as PPM (or PNG).

    The container follows the file suffix: ``.png`` selects PNG, anything
    else selects binary PNM.
    """
    path = Path(path)
    a = np.asarray(img, dtype=np.float64)
    if a.ndim not in (2, 3) or (a.ndim == 3 and a.shape[2] != 3):
        raise ValueError(f"expected a plane or (H, W, 3) image, got shape {a.shape}")
    q = _quantize(a)
    try:
        if path.suffix.lower() == ".png":
            from PIL import Image

            Image.fromarray(q).save(path, format="PNG")
        else:
            _write_pnm(q, path)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write image: {exc.strerror}", os.fspath(path)) from exc


def load_plane(path) -> np.ndarray:
    """Convenience: load any supported file and return its luminance."""
    return to_luma(load_image(path))


def to_luma(img) -> np.ndarray:
    """BT.601 luminance, clamped to [0, 1]."""
    a = np.asarray(img, dtype=np.float64)
    wr, wg, wb = LUMA_WEIGHTS
    y = wr * a[..., 0] + wg * a[..., 1] + wb * a[..., 2]
    return np.clip(y, 0.0, 1.0)


def replace_luma(img, new_y) -> np.ndarray:
    """Shift every channel by ``new_y - old_y`` and clamp.

    An additive delta is used rather than a ratio so black pixels are
    handled without division.
    """
    a = np.asarray(img, dtype=np.float64)
    y = np.asarray(new_y, dtype=np.float64)
    if a.shape[:2] != y.shape:
        raise ValueError(f"geometry mismatch: image {a.shape[:2]} vs luma {y.shape}")
    delta = y - to_luma(a)
    return np.clip(a + delta[:, :, None], 0.0, 1.0)


def pad_to_multiple(p, m: int) -> np.ndarray:
    """Symmetric-reflect pad right/bottom so both sides are multiples of ``m``.

    The edge sample is repeated: for width 17 padded to 24, new columns
    17..23 copy columns 16..10.
    """
    if m < 1:
        raise ValueError("block size must be >= 1")
    p = np.asarray(p, dtype=np.float64)
    h, w = p.shape
    ph = (-h) % m
    pw = (-w) % m
    if ph == 0 and pw == 0:
        return p.copy()
    return np.pad(p, ((0, ph), (0, pw)), mode="symmetric")


def crop(p, height: int, width: int) -> np.ndarray:
    return np.asarray(p)[:height, :width].copy()
