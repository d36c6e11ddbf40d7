"""D1 (point-to-point) PSNR and bits per point."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError

PSNR_INF = math.inf


@dataclass
class D1Report:
    mse_a_to_b: float
    mse_b_to_a: float
    psnr_a_to_b: float
    psnr_b_to_a: float
    psnr_symmetric: float
    peak: float

    def as_dict(self):
        return dict(mse_a_to_b=self.mse_a_to_b, mse_b_to_a=self.mse_b_to_a,
                    psnr_a_to_b=self.psnr_a_to_b, psnr_b_to_a=self.psnr_b_to_a,
                    psnr_symmetric=self.psnr_symmetric, peak=self.peak)


def nn_sq_dists(a: np.ndarray, b: np.ndarray, tree: cKDTree | None = None) -> np.ndarray:
    """Squared distance from each point of ``a`` to its nearest neighbour in ``b``.

    The k-d tree only picks the neighbour; the distance is recomputed in
    integer arithmetic so the result is exact.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if len(a) == 0:
        return np.zeros(0, dtype=np.int64)
    if tree is None:
        tree = cKDTree(b)
    _, idx = tree.query(a, k=1)
    diff = a - b[idx]
    return np.einsum("ij,ij->i", diff, diff)


def psnr(mse: float, peak: float, convention: str = "3p2") -> float:
    if mse == 0:
        return PSNR_INF
    top = 3.0 * peak * peak if convention == "3p2" else peak * peak
    return 10.0 * math.log10(top / mse)


def d1_psnr(A, B, peak: float | None = None, convention: str = "3p2") -> D1Report:
    """Point-to-point PSNR between two clouds; the symmetric value uses the worse direction."""
    a = np.asarray(getattr(A, "points", A))
    b = np.asarray(getattr(B, "points", B))
    if len(a) == 0 or len(b) == 0:
        raise DataError("D1 PSNR needs two non-empty clouds")
    if peak is None:
        depth = getattr(A, "bit_depth", None)
        if depth is None:
            raise ValueError("peak required for raw arrays")
        peak = float((1 << depth) - 1)
    mse_ab = float(nn_sq_dists(a, b).mean())
    mse_ba = float(nn_sq_dists(b, a).mean())
    return D1Report(mse_ab, mse_ba, psnr(mse_ab, peak, convention), psnr(mse_ba, peak, convention),
                    psnr(max(mse_ab, mse_ba), peak, convention), float(peak))


def bpp(bitstream, frames) -> float:
    """Total bitstream bits (header included) over total input points."""
    nbytes = len(bitstream) if isinstance(bitstream, (bytes, bytearray)) else len(bitstream.to_bytes())
    points = sum(len(f) for f in frames)
    if points == 0:
        raise DataError("no input points")
    return 8.0 * nbytes / points
