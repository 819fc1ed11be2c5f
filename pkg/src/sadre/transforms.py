"""Orthonormal transform kernels: 8x8 block DCT, multi-level Haar DWT, Jacobi SVD.

Everything here is energy preserving, so the Haar analysis doubles as a
Lipschitz-1 (in fact isometric) latent map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

BLOCK = 8


def dct_matrix(n: int = BLOCK) -> np.ndarray:
    """Orthonormal DCT-II matrix ``C`` with ``X = C @ x``."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    c[0, :] = np.sqrt(1.0 / n)
    return c


_C8 = dct_matrix(BLOCK)


def dct2(b) -> np.ndarray:
    """Orthonormal 2-D DCT-II of an 8x8 block or a stack ``(..., 8, 8)``."""
    b = np.asarray(b, dtype=np.float64)
    return _C8 @ b @ _C8.T


def idct2(c) -> np.ndarray:
    """Inverse of :func:`dct2` (2-D DCT-III)."""
    c = np.asarray(c, dtype=np.float64)
    return _C8.T @ c @ _C8


def zigzag_order(n: int = BLOCK) -> list[tuple[int, int]]:
    """JPEG zig-zag scan order as (row, col) pairs."""
    order = []
    for s in range(2 * n - 1):
        diag = [(i, s - i) for i in range(n) if 0 <= s - i < n]
        # even anti-diagonals run bottom-left to top-right
        order.extend(reversed(diag) if s % 2 == 0 else diag)
    return order


ZIGZAG = zigzag_order()
MID_BAND = tuple(ZIGZAG[6:18])  # 12 mid-frequency positions
MID_ROWS = np.array([r for r, _ in MID_BAND])
MID_COLS = np.array([c for _, c in MID_BAND])


def blockify(p: np.ndarray, n: int = BLOCK) -> np.ndarray:
    """Split ``(H, W)`` into ``(H/n, W/n, n, n)`` tiles (view-free copy)."""
    h, w = p.shape
    if h % n or w % n:
        raise ValueError(f"plane {h}x{w} is not a multiple of {n}; use pad_to_multiple")
    return p.reshape(h // n, n, w // n, n).swapaxes(1, 2).copy()


def unblockify(blocks: np.ndarray) -> np.ndarray:
    r, c, n, m = blocks.shape
    return blocks.swapaxes(1, 2).reshape(r * n, c * m).copy()


# --- Haar DWT ----------------------------------------------------------------

@dataclass
class Subbands:
    """Multi-level Haar decomposition.

    ``details[0]`` is the finest level; each entry is ``(LH, HL, HH)`` where
    HL is high-pass along rows (horizontal detail) and LH is high-pass
    along columns.
    """

    ll: np.ndarray
    details: list[tuple[np.ndarray, np.ndarray, np.ndarray]]

    @property
    def levels(self) -> int:
        return len(self.details)

    @property
    def shape(self) -> tuple[int, int]:
        h, w = self.ll.shape
        return h << self.levels, w << self.levels

    def arrays(self) -> list[np.ndarray]:
        """All coefficient arrays in a fixed order: LL, then level 1..L bands."""
        out = [self.ll]
        for bands in self.details:
            out.extend(bands)
        return out

    def detail_arrays(self) -> list[np.ndarray]:
        return self.arrays()[1:]

    @classmethod
    def from_arrays(cls, arrays: list[np.ndarray]) -> "Subbands":
        ll, rest = arrays[0], arrays[1:]
        details = [tuple(rest[i : i + 3]) for i in range(0, len(rest), 3)]
        return cls(ll=ll, details=details)

    def map(self, fn: Callable[..., np.ndarray], *others: "Subbands") -> "Subbands":
        """Apply ``fn`` band by band across this and ``others``."""
        groups = zip(self.arrays(), *(o.arrays() for o in others))
        return Subbands.from_arrays([fn(*g) for g in groups])

    def copy(self) -> "Subbands":
        return self.map(np.copy)

    def energy(self) -> float:
        return float(sum(np.sum(a * a) for a in self.arrays()))

    def size(self) -> int:
        return sum(a.size for a in self.arrays())


def _haar_step(p: np.ndarray):
    a = p[0::2, 0::2]
    b = p[0::2, 1::2]
    c = p[1::2, 0::2]
    d = p[1::2, 1::2]
    ll = (a + b + c + d) * 0.5
    hl = (a - b + c - d) * 0.5
    lh = (a + b - c - d) * 0.5
    hh = (a - b - c + d) * 0.5
    return ll, (lh, hl, hh)


def _ihaar_step(ll, lh, hl, hh) -> np.ndarray:
    h, w = ll.shape
    out = np.empty((2 * h, 2 * w))
    out[0::2, 0::2] = (ll + hl + lh + hh) * 0.5
    out[0::2, 1::2] = (ll - hl + lh - hh) * 0.5
    out[1::2, 0::2] = (ll + hl - lh - hh) * 0.5
    out[1::2, 1::2] = (ll - hl - lh + hh) * 0.5
    return out


def haar_dwt2(p, levels: int) -> Subbands:
    """Orthonormal ``levels``-deep 2-D Haar analysis."""
    p = np.asarray(p, dtype=np.float64)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    m = 1 << levels
    h, w = p.shape
    if h % m or w % m:
        raise ValueError(
            f"plane {h}x{w} is not divisible by 2**{levels}={m}; pad it with pad_to_multiple(p, {m})"
        )
    details = []
    cur = p
    for _ in range(levels):
        cur, bands = _haar_step(cur)
        details.append(bands)
    return Subbands(ll=cur.copy(), details=[tuple(b.copy() for b in d) for d in details])


def haar_idwt2(s: Subbands) -> np.ndarray:
    cur = s.ll
    for lh, hl, hh in reversed(s.details):
        cur = _ihaar_step(cur, lh, hl, hh)
    return cur


# --- SVD -----------------------------------------------------------------------

_EPS2 = np.finfo(np.float64).eps ** 2


class SVDConvergenceError(RuntimeError):
    pass


def svd_small(a, max_sweeps: int = 100, tol: float = 1e-12):
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Accepts one matrix ``(m, n)`` or a stack ``(..., m, n)``; stacks are
    rotated in lock-step so a batch of 8x8 blocks costs one Python loop.
    Returns ``U (..., m, k)``, ``S (..., k)``, ``Vt (..., k, n)`` with
    ``k = min(m, n)`` and ``S`` non-increasing.

    A column pair counts as orthogonal once ``|a_i . a_j|`` is below
    ``tol * ||a_i|| ||a_j||``. A floor of ``eps**2 * ||a||_F**2`` stops
    rotations between numerically null columns.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2:
        raise ValueError("svd_small needs a matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("svd_small: non-finite entries")
    m, n = a.shape[-2:]
    if max(m, n) > 64:
        raise ValueError(f"svd_small handles matrices up to 64x64, got {m}x{n}")
    if m < n:
        u, s, vt = svd_small(np.swapaxes(a, -1, -2), max_sweeps, tol)
        return np.swapaxes(vt, -1, -2), s, np.swapaxes(u, -1, -2)

    batch = a.shape[:-2]
    w = a.reshape((-1, m, n)).copy()
    nb = w.shape[0]
    v = np.broadcast_to(np.eye(n), (nb, n, n)).copy()
    fro2 = np.sum(w * w, axis=(1, 2))

    for _sweep in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                ai = w[:, :, i]
                aj = w[:, :, j]
                alpha = np.einsum("bk,bk->b", ai, ai)
                beta = np.einsum("bk,bk->b", aj, aj)
                gamma = np.einsum("bk,bk->b", ai, aj)
                thresh = np.maximum(tol * np.sqrt(alpha * beta), _EPS2 * fro2)
                act = np.abs(gamma) > thresh
                if not act.any():
                    continue
                rotated = True
                g = np.where(act, gamma, 1.0)
                zeta = (beta - alpha) / (2.0 * g)
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                c = np.where(act, c, 1.0)[:, None]
                s = np.where(act, s, 0.0)[:, None]
                new_i = c * ai - s * aj
                new_j = s * ai + c * aj
                w[:, :, i] = new_i
                w[:, :, j] = new_j
                vi = v[:, :, i].copy()
                vj = v[:, :, j]
                v[:, :, i] = c * vi - s * vj
                v[:, :, j] = s * vi + c * vj
        if not rotated:
            break
    else:
        raise SVDConvergenceError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")

    sv = np.sqrt(np.sum(w * w, axis=1))  # (nb, n)
    order = np.argsort(-sv, axis=1, kind="stable")
    sv = np.take_along_axis(sv, order, axis=1)
    w = np.take_along_axis(w, order[:, None, :], axis=2)
    v = np.take_along_axis(v, order[:, None, :], axis=2)

    u = np.empty_like(w)
    for b in range(nb):
        u[b] = _normalize_columns(w[b], sv[b])
    return (
        u.reshape(batch + (m, n)),
        sv.reshape(batch + (n,)),
        np.swapaxes(v, 1, 2).reshape(batch + (n, n)),
    )


def _normalize_columns(w: np.ndarray, sv: np.ndarray) -> np.ndarray:
    """Scale columns to unit length; complete null columns to an orthonormal set."""
    m, n = w.shape
    u = np.zeros_like(w)
    scale = sv[0] if sv[0] > 0 else 1.0
    good = sv > 1e-14 * scale
    u[:, good] = w[:, good] / sv[good]
    if good.all():
        return u
    basis = [u[:, k] for k in range(n) if good[k]]
    for k in range(n):
        if good[k]:
            continue
        for e in range(m):
            cand = np.zeros(m)
            cand[e] = 1.0
            for q in basis:
                cand -= (q @ cand) * q
            for q in basis:  # second pass for numerical orthogonality
                cand -= (q @ cand) * q
            nrm = np.linalg.norm(cand)
            if nrm > 1e-8:
                u[:, k] = cand / nrm
                basis.append(u[:, k])
                break
    return u
