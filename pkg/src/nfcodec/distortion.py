"""Occupancy distortion: focal loss, distance-weighted focal loss, multi-scale sum.

Also computes the per-cube distance field used as the weight of the
full-resolution term: the Euclidean distance (voxel units, centre to centre)
from each voxel of a non-empty cube to the nearest occupied voxel anywhere in
the cloud.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .autodiff import Tensor
from .errors import DataError

_F_MIN = 1e-12


@dataclass
class LossConfig:
    lam: float = 1.0
    alpha: float = 0.5
    gamma_focal: float = 2.0
    distance_weighted: bool = True
    # use D_i itself instead of max(D_i, 1); zero weight on occupied voxels
    raw_distance: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.gamma_focal < 0:
            raise ValueError("focal gamma must be >= 0")


def empty_fraction(grids) -> float:
    """Portion of empty voxels over a collection of binary grids, used as alpha."""
    total = 0
    occupied = 0
    for g in grids:
        total += g.size
        occupied += int(np.count_nonzero(g))
    if total == 0:
        raise DataError("no voxels")
    alpha = 1.0 - occupied / total
    return min(max(alpha, 1e-6), 1.0 - 1e-6)


def _weighted_focal(P: Tensor, G: np.ndarray, W, alpha: float, gamma: float) -> Tensor:
    G = np.asarray(G, dtype=bool)
    if G.shape != P.shape:
        raise ValueError(f"prediction {P.shape} and ground truth {G.shape} differ in shape")
    p = P.data
    F = np.where(G, p, 1.0 - p)
    clipped = F < _F_MIN
    F = np.maximum(F, _F_MIN)
    a = np.where(G, alpha, 1.0 - alpha)
    if W is not None:
        a = a * W
    logF = np.log(F)
    one_m = 1.0 - F
    mod = one_m ** gamma if gamma != 0 else 1.0
    total = -np.sum(a * mod * logF)

    def bw(g):
        if gamma == 0:
            dF = -a / F
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                d_mod = np.where(one_m > 0, gamma * one_m ** (gamma - 1.0), 0.0)
            dF = -a * (mod / F - d_mod * logF)
        dF = np.where(clipped, 0.0, dF)
        return (float(np.reshape(g, -1)[0]) * np.where(G, dF, -dF),)

    return Tensor.from_op(np.asarray(total), (P,), bw)


def focal_loss(P: Tensor, G, cfg: LossConfig) -> Tensor:
    """-sum alpha_i (1 - F_i)^gamma log F_i."""
    return _weighted_focal(P, G, None, cfg.alpha, cfg.gamma_focal)


def distance_weights(D, raw: bool = False) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    return D if raw else np.maximum(D, 1.0)


def distance_weighted_focal_loss(P: Tensor, G, D, cfg: LossConfig) -> Tensor:
    """Focal loss with each voxel weighted by max(D_i, 1) (or raw D_i, see LossConfig)."""
    D = np.asarray(D, dtype=np.float64)
    if D.shape != P.shape:
        raise ValueError(f"distance field {D.shape} does not match prediction {P.shape}")
    return _weighted_focal(P, G, distance_weights(D, cfg.raw_distance), cfg.alpha,
                           cfg.gamma_focal)


def downsample_occupancy(G, factor: int = 2) -> np.ndarray:
    """OR-pool the last three axes by ``factor``."""
    G = np.asarray(G, dtype=bool)
    *lead, d, h, w = G.shape
    if d % factor or h % factor or w % factor:
        raise ValueError(f"grid {G.shape} not divisible by {factor}")
    r = G.reshape(*lead, d // factor, factor, h // factor, factor, w // factor, factor)
    return r.any(axis=(-5, -3, -1))


def multiscale_distortion(P1, P2, P3, G1, G2, G3, D, cfg: LossConfig) -> Tensor:
    if cfg.distance_weighted:
        d1 = distance_weighted_focal_loss(P1, G1, D, cfg)
    else:
        d1 = focal_loss(P1, G1, cfg)
    return d1 + focal_loss(P2, G2, cfg) + focal_loss(P3, G3, cfg)


# ---------------------------------------------------------------- distance field

def compute_distance_field(pc, tree) -> list[np.ndarray]:
    """Exact Euclidean distance to the nearest occupied voxel, for every voxel of every cube.

    A cube always contains a point, so the cube-local transform bounds the true
    distance from above; only occupied voxels within that bound of the cube are
    gathered from neighbouring cubes before the final exact transform.
    """
    pts = np.asarray(pc.points, dtype=np.int64)
    if len(pts) == 0:
        raise DataError("empty point cloud")
    side = 1 << tree.N
    leaf_of = pts >> tree.N
    order = np.lexsort((leaf_of[:, 2], leaf_of[:, 1], leaf_of[:, 0]))
    leaf_sorted = leaf_of[order]
    local_sorted = pts[order] - (leaf_sorted << tree.N)
    keys, starts = np.unique(leaf_sorted, axis=0, return_index=True)
    ends = np.append(starts[1:], len(pts))
    groups = {tuple(k): local_sorted[s:e] for k, s, e in zip(keys.tolist(), starts, ends)}

    def cube_occ(leaf):
        occ = np.zeros((side, side, side), dtype=bool)
        loc = groups.get(leaf)
        if loc is not None:
            occ[loc[:, 0], loc[:, 1], loc[:, 2]] = True
        return occ

    fields = []
    for origin in np.asarray(tree.leaf_origins, dtype=np.int64):
        leaf = tuple((origin >> tree.N).tolist())
        occ = cube_occ(leaf)
        if not occ.any():
            raise DataError(f"leaf {leaf} has no points")
        local = ndimage.distance_transform_edt(~occ)
        margin = int(math.ceil(float(local.max())))
        if margin == 0:
            fields.append(local)
            continue
        reach = -(-margin // side)
        span = 2 * reach + 1
        block = np.zeros((span * side,) * 3, dtype=bool)
        for dx in range(-reach, reach + 1):
            for dy in range(-reach, reach + 1):
                for dz in range(-reach, reach + 1):
                    nb = (leaf[0] + dx, leaf[1] + dy, leaf[2] + dz)
                    if nb not in groups:
                        continue
                    loc = groups[nb]
                    bx, by, bz = ((dx + reach) * side, (dy + reach) * side, (dz + reach) * side)
                    block[loc[:, 0] + bx, loc[:, 1] + by, loc[:, 2] + bz] = True
        lo = reach * side - margin
        hi = (reach + 1) * side + margin
        sub = block[lo:hi, lo:hi, lo:hi]
        dist = ndimage.distance_transform_edt(~sub)
        fields.append(dist[margin:margin + side, margin:margin + side, margin:margin + side])
    return fields
