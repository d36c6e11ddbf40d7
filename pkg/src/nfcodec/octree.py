"""Shallow octree over the voxel grid and the per-leaf cube partition.

The first M levels of the full octree are kept explicitly; each occupied leaf
owns a (2^N)^3 binary cube. Children of a node are indexed ``4*x + 2*y + z``
(x, y, z the low bit of the child coordinate) and child 0 is the most
significant bit of the node's occupancy byte. Nodes are visited breadth first,
which at every level equals Morton order; the leaf order is the cube index k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, OctreeFormatError
from .pointcloud_io import PointCloud


@dataclass
class CubeGrid:
    occupancy: np.ndarray  # bool (side, side, side), indexed [x, y, z]
    origin: np.ndarray  # voxel units

    @property
    def side(self) -> int:
        return self.occupancy.shape[0]


@dataclass(eq=False)
class ShallowOctree:
    M: int
    N: int
    occupancy: list = field(default_factory=list)  # per level, uint8 0/1 bits, 8 per node
    leaf_origins: np.ndarray = None  # (K, 3) int64, multiples of 2^N

    def __post_init__(self):
        if self.leaf_origins is None:
            self.leaf_origins = np.zeros((0, 3), dtype=np.int64)

    @property
    def num_leaves(self) -> int:
        return len(self.leaf_origins)

    def __eq__(self, other):
        if not isinstance(other, ShallowOctree):
            return NotImplemented
        return (self.M == other.M and self.N == other.N
                and len(self.occupancy) == len(other.occupancy)
                and all(np.array_equal(a, b) for a, b in zip(self.occupancy, other.occupancy))
                and np.array_equal(self.leaf_origins, other.leaf_origins))


def morton_key(coords: np.ndarray, bits: int) -> np.ndarray:
    """Interleave coordinate bits MSB first, x highest within each triple."""
    c = np.asarray(coords, dtype=np.int64)
    key = np.zeros(len(c), dtype=np.int64)
    for b in range(bits - 1, -1, -1):
        key = (key << 3) | (((c[:, 0] >> b) & 1) << 2) | (((c[:, 1] >> b) & 1) << 1) | ((c[:, 2] >> b) & 1)
    return key


def _morton_unique(coords: np.ndarray, bits: int) -> np.ndarray:
    if len(coords) == 0:
        return coords.reshape(0, 3)
    key = morton_key(coords, bits)
    _, first = np.unique(key, return_index=True)
    return coords[first]  # np.unique sorts keys ascending


def build(pc: PointCloud, M: int, N: int):
    """Shallow octree plus one CubeGrid per occupied leaf, in leaf order."""
    if pc.bit_depth != M + N:
        raise DataError(f"bit depth {pc.bit_depth} != M + N = {M + N}")
    if M < 0 or N < 1:
        raise DataError("need M >= 0 and N >= 1")
    pts = pc.points
    if len(pts) == 0:
        raise DataError("cannot build an octree from an empty point cloud")
    leaves = _morton_unique(pts >> N, M)
    occupancy = []
    for level in range(M):
        nodes = _morton_unique(leaves >> (M - level), level)
        children = _morton_unique(leaves >> (M - level - 1), level + 1)
        node_pos = {tuple(n): i for i, n in enumerate(nodes.tolist())}
        bits = np.zeros((len(nodes), 8), dtype=np.uint8)
        parent = children >> 1
        idx = 4 * (children[:, 0] & 1) + 2 * (children[:, 1] & 1) + (children[:, 2] & 1)
        rows = np.array([node_pos[tuple(p)] for p in parent.tolist()], dtype=np.int64)
        bits[rows, idx] = 1
        occupancy.append(bits.reshape(-1))
    tree = ShallowOctree(M, N, occupancy, leaves << N)

    side = 1 << N
    key = morton_key(pts >> N, M)
    order = np.argsort(key, kind="stable")
    key_sorted = key[order]
    leaf_keys = morton_key(leaves, M)
    starts = np.searchsorted(key_sorted, leaf_keys, side="left")
    ends = np.searchsorted(key_sorted, leaf_keys, side="right")
    cubes = []
    for origin, s, e in zip(tree.leaf_origins, starts, ends):
        local = pts[order[s:e]] - origin
        occ = np.zeros((side, side, side), dtype=bool)
        occ[local[:, 0], local[:, 1], local[:, 2]] = True
        cubes.append(CubeGrid(occ, origin.copy()))
    return tree, cubes


def points_from_cubes(origins, occupancies, bit_depth: int) -> PointCloud:
    chunks = [np.argwhere(occ) + np.asarray(o, dtype=np.int64)
              for o, occ in zip(origins, occupancies)]
    pts = np.concatenate(chunks) if chunks else np.zeros((0, 3), dtype=np.int64)
    return PointCloud(pts, bit_depth)


def reconstruct(tree: ShallowOctree, cubes) -> PointCloud:
    if len(cubes) != tree.num_leaves:
        raise DataError(f"{len(cubes)} cubes for {tree.num_leaves} occupied leaves")
    return points_from_cubes(tree.leaf_origins, [c.occupancy for c in cubes], tree.M + tree.N)


def serialize_bfs(tree: ShallowOctree) -> np.ndarray:
    """All occupancy bytes, level by level, as a flat uint8 array of 0/1."""
    if not tree.occupancy:
        return np.zeros(0, dtype=np.uint8)
    return np.concatenate(tree.occupancy).astype(np.uint8)


def deserialize_bfs(bits, M: int, N: int) -> ShallowOctree:
    if isinstance(bits, str):
        bits = np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0")
    bits = np.asarray(bits, dtype=np.uint8)
    if np.any(bits > 1):
        raise OctreeFormatError("bit-string contains values other than 0/1")
    nodes = np.zeros((1, 3), dtype=np.int64)
    pos = 0
    occupancy = []
    offsets = np.array([[i >> 2 & 1, i >> 1 & 1, i & 1] for i in range(8)], dtype=np.int64)
    for level in range(M):
        need = 8 * len(nodes)
        if pos + need > len(bits):
            raise OctreeFormatError(f"bit-string truncated at level {level}")
        lvl = bits[pos:pos + need].copy()
        pos += need
        grid = lvl.reshape(-1, 8).astype(bool)
        if not grid.any(axis=1).all():
            raise OctreeFormatError(f"occupied node without children at level {level}")
        rows, idx = np.nonzero(grid)  # row-major: parent order, then child index
        nodes = nodes[rows] * 2 + offsets[idx]
        occupancy.append(lvl)
    if pos != len(bits):
        raise OctreeFormatError(f"{len(bits) - pos} trailing bits after level {M}")
    return ShallowOctree(M, N, occupancy, nodes << N)


def bits_to_str(bits) -> str:
    return "".join("1" if b else "0" for b in np.asarray(bits).tolist())
