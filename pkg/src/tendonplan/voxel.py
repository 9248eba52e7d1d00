"""Sparse voxel occupancy grid with bit-packed 4x4x4 leaf blocks.

Blocks are addressed by Morton (octree) keys so ancestor nodes at every
octree level are key prefixes; collision tests descend the two trees
simultaneously one level at a time and bail out as soon as an entire
subtree is absent from either grid.

Bit layout within a block: bit = lx + 4*ly + 16*lz for local voxel
offsets (lx, ly, lz) in 0..3.  On disk each occupied block is an 11-byte
record: 3-byte little-endian row-major (x-fastest) linear block index
followed by the 8-byte little-endian occupancy word.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from . import _voxel_core

_MAGIC = b"TPVOX1\x00\x00"
_HEADER = struct.Struct("<8s3I6d I")

_ONE = np.uint64(1)


def _part1by2(x: np.ndarray) -> np.ndarray:
    """Spread the low 10 bits of each value to every third bit position."""
    x = x.astype(np.uint64)
    x = (x | (x << np.uint64(16))) & np.uint64(0x030000FF)
    x = (x | (x << np.uint64(8))) & np.uint64(0x0300F00F)
    x = (x | (x << np.uint64(4))) & np.uint64(0x030C30C3)
    x = (x | (x << np.uint64(2))) & np.uint64(0x09249249)
    return x


def _compact1by2(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64) & np.uint64(0x09249249)
    x = (x | (x >> np.uint64(2))) & np.uint64(0x030C30C3)
    x = (x | (x >> np.uint64(4))) & np.uint64(0x0300F00F)
    x = (x | (x >> np.uint64(8))) & np.uint64(0x030000FF)
    x = (x | (x >> np.uint64(16))) & np.uint64(0x000003FF)
    return x


def _morton(bx, by, bz):
    return _part1by2(bx) | (_part1by2(by) << _ONE) | (_part1by2(bz) << np.uint64(2))


def _unmorton(m: np.ndarray):
    m = m.astype(np.uint64)
    return (_compact1by2(m), _compact1by2(m >> _ONE),
            _compact1by2(m >> np.uint64(2)))


class SparseVoxelGrid:
    """Occupancy map over a fixed lattice; only occupied blocks are stored."""

    def __init__(self, dims, spacing, origin=(0.0, 0.0, 0.0)):
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValueError("dims must be three positive integers")
        if max(dims) > 4096:
            raise ValueError("grid dimension exceeds 4096 voxels")
        self.dims = dims
        self.spacing = tuple(float(s) for s in spacing)
        if any(s <= 0 for s in self.spacing):
            raise ValueError("spacing must be positive")
        self.origin = tuple(float(o) for o in origin)
        # storage padded up to whole blocks; logical dims kept as declared
        self.block_dims = tuple((d + 3) // 4 for d in dims)
        self._depth = max(1, math.ceil(math.log2(max(self.block_dims))))
        self._blocks: dict[int, int] = {}
        self._levels = None  # lazy per-level ancestor key sets, coarse first
        self._packed = None  # lazy (sorted keys, words) arrays for lookups

    # -- frame helpers -------------------------------------------------

    def same_frame(self, other: "SparseVoxelGrid") -> bool:
        return (self.dims == other.dims and self.spacing == other.spacing
                and self.origin == other.origin)

    def _require_frame(self, other: "SparseVoxelGrid"):
        if not self.same_frame(other):
            raise ValueError("voxel grid frames do not match")

    def empty_like(self) -> "SparseVoxelGrid":
        return SparseVoxelGrid(self.dims, self.spacing, self.origin)

    def copy(self) -> "SparseVoxelGrid":
        g = self.empty_like()
        g._blocks = dict(self._blocks)
        return g

    def __eq__(self, other) -> bool:
        return (isinstance(other, SparseVoxelGrid) and self.same_frame(other)
                and self._blocks == other._blocks)

    # -- occupancy -----------------------------------------------------

    @property
    def num_blocks(self) -> int:
        return len(self._blocks)

    @property
    def count(self) -> int:
        """Total number of occupied voxels (population count of all words)."""
        return sum(v.bit_count() for v in self._blocks.values())

    def __bool__(self) -> bool:
        return bool(self._blocks)

    def add_voxels(self, idx: np.ndarray):
        """OR an (n, 3) array of voxel indices into the grid."""
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            return
        if idx.ndim != 2 or idx.shape[1] != 3:
            raise ValueError("expected an (n, 3) index array")
        if np.any(idx < 0) or np.any(idx >= np.array(self.dims)):
            raise ValueError("voxel index out of bounds")
        keys = _morton(idx[:, 0] >> 2, idx[:, 1] >> 2, idx[:, 2] >> 2)
        bits = ((idx[:, 0] & 3) + 4 * (idx[:, 1] & 3)
                + 16 * (idx[:, 2] & 3)).astype(np.uint64)
        words = _ONE << bits
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        words = words[order]
        starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
        merged = np.bitwise_or.reduceat(words, starts)
        blocks = self._blocks
        for k, w in zip(keys[starts].tolist(), merged.tolist()):
            prev = blocks.get(k)
            blocks[k] = w if prev is None else prev | w
        self._levels = None
        self._packed = None

    def add_dense(self, arr: np.ndarray):
        """OR a dense boolean array (indexed [x, y, z]) into the grid."""
        if arr.shape != self.dims:
            raise ValueError("dense array shape does not match grid dims")
        self.add_voxels(np.argwhere(arr))

    def occupied_voxels(self) -> np.ndarray:
        """All occupied voxel indices, (n, 3), sorted by block key then bit."""
        if not self._blocks:
            return np.empty((0, 3), dtype=np.int64)
        keys = np.fromiter(self._blocks.keys(), dtype=np.uint64,
                           count=len(self._blocks))
        words = np.fromiter(self._blocks.values(), dtype=np.uint64,
                            count=len(self._blocks))
        order = np.argsort(keys)
        keys = keys[order]
        words = words[order]
        bits = (words[:, None] >> np.arange(64, dtype=np.uint64)) & _ONE
        bk, bit = np.nonzero(bits)
        bx, by, bz = _unmorton(keys[bk])
        out = np.empty((bk.shape[0], 3), dtype=np.int64)
        out[:, 0] = (bx.astype(np.int64) << 2) + (bit & 3)
        out[:, 1] = (by.astype(np.int64) << 2) + ((bit >> 2) & 3)
        out[:, 2] = (bz.astype(np.int64) << 2) + ((bit >> 4) & 3)
        return out

    def to_dense(self) -> np.ndarray:
        arr = np.zeros(self.dims, dtype=bool)
        idx = self.occupied_voxels()
        arr[idx[:, 0], idx[:, 1], idx[:, 2]] = True
        return arr

    def contains_voxel(self, i: int, j: int, k: int) -> bool:
        i, j, k = int(i), int(j), int(k)
        if not (0 <= i < self.dims[0] and 0 <= j < self.dims[1]
                and 0 <= k < self.dims[2]):
            return False
        key = int(_morton(np.uint64(i >> 2), np.uint64(j >> 2),
                          np.uint64(k >> 2)))
        w = self._blocks.get(key)
        if w is None:
            return False
        return bool((w >> ((i & 3) + 4 * (j & 3) + 16 * (k & 3))) & 1)

    # -- octree levels -------------------------------------------------

    def _level_sets(self):
        """Ancestor key sets per octree level, root (level 0) first."""
        if self._levels is None:
            keys = list(self._blocks.keys())
            levels = []
            for lev in range(self._depth + 1):
                shift = 3 * (self._depth - lev)
                levels.append({k >> shift for k in keys})
            self._levels = levels
        return self._levels

    def packed_blocks(self):
        """(sorted Morton keys, words) as uint64 arrays, for JIT lookups."""
        if self._packed is None:
            n = len(self._blocks)
            keys = np.fromiter(self._blocks.keys(), dtype=np.uint64, count=n)
            words = np.fromiter(self._blocks.values(), dtype=np.uint64,
                                count=n)
            order = np.argsort(keys)
            self._packed = (np.ascontiguousarray(keys[order]),
                            np.ascontiguousarray(words[order]))
        return self._packed


def voxel_index(g: SparseVoxelGrid, p) -> tuple:
    """Voxel containing the point p (mm); errors if p is out of bounds."""
    p = np.asarray(p, dtype=float)
    idx = np.floor((p - np.array(g.origin)) / np.array(g.spacing)).astype(int)
    upper = np.array(g.dims)
    # points exactly on the far boundary belong to the last voxel
    on_hi = (idx == upper) & np.isclose(
        p, np.array(g.origin) + upper * np.array(g.spacing))
    idx[on_hi] -= 1
    if np.any(idx < 0) or np.any(idx >= upper):
        raise ValueError(f"point {p.tolist()} outside the voxel grid")
    return (int(idx[0]), int(idx[1]), int(idx[2]))


def collides(a: SparseVoxelGrid, b: SparseVoxelGrid) -> bool:
    """True iff some voxel is occupied in both grids.

    Descends both octrees level by level; a level whose key intersection
    is empty proves the remaining subtrees are disjoint.
    """
    a._require_frame(b)
    if not a._blocks or not b._blocks:
        return False
    la = a._level_sets()
    lb = b._level_sets()
    for lev in range(len(la) - 1):
        if not (la[lev] & lb[lev]):
            return False
    for key in la[-1] & lb[-1]:
        if a._blocks[key] & b._blocks[key]:
            return True
    return False


def union_into(a: SparseVoxelGrid, b: SparseVoxelGrid) -> SparseVoxelGrid:
    """OR grid b into grid a (mutating a) and return a."""
    a._require_frame(b)
    blocks = a._blocks
    for k, w in b._blocks.items():
        prev = blocks.get(k)
        blocks[k] = w if prev is None else prev | w
    a._levels = None
    a._packed = None
    return a


def ball_stencil(spacing, r: float) -> np.ndarray:
    """Integer voxel offsets whose center distance is within r (mm)."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    dx, dy, dz = spacing
    mx = int(r / dx)
    my = int(r / dy)
    mz = int(r / dz)
    ox, oy, oz = np.meshgrid(np.arange(-mx, mx + 1), np.arange(-my, my + 1),
                             np.arange(-mz, mz + 1), indexing="ij")
    d2 = (ox * dx) ** 2 + (oy * dy) ** 2 + (oz * dz) ** 2
    keep = d2 <= r * r + 1e-12
    return np.stack([ox[keep], oy[keep], oz[keep]], axis=1).astype(np.int64)


def dilate_sphere(g: SparseVoxelGrid, r: float) -> SparseVoxelGrid:
    """Morphological dilation by a physical ball of radius r (mm)."""
    stencil = ball_stencil(g.spacing, r)
    out = g.empty_like()
    vox = g.occupied_voxels()
    if vox.size == 0:
        return out
    nbx, nby, nbz = g.block_dims
    words = np.zeros(nbx * nby * nbz, dtype=np.uint64)
    _voxel_core.dilate_into_blocks(vox, stencil, g.dims[0], g.dims[1],
                                   g.dims[2], nbx, nby, nbz, words)
    occ = np.flatnonzero(words)
    bx = occ % nbx
    by = (occ // nbx) % nby
    bz = occ // (nbx * nby)
    keys = _morton(bx.astype(np.uint64), by.astype(np.uint64),
                   bz.astype(np.uint64))
    out._blocks = dict(zip(keys.tolist(), words[occ].tolist()))
    return out


def _check_in_bounds(g: SparseVoxelGrid, p, label: str):
    p = np.asarray(p, dtype=float)
    lo = np.array(g.origin)
    hi = lo + np.array(g.dims) * np.array(g.spacing)
    if np.any(p < lo - 1e-9) or np.any(p > hi + 1e-9):
        raise ValueError(f"{label} {p.tolist()} outside the voxel grid")


def voxelize_segment(g: SparseVoxelGrid, a, b) -> np.ndarray:
    """Voxels the segment a-b passes through, as an (n, 3) index array."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_in_bounds(g, a, "segment endpoint")
    _check_in_bounds(g, b, "segment endpoint")
    return _voxel_core.traverse_segment(
        a[0], a[1], a[2], b[0], b[1], b[2],
        g.origin[0], g.origin[1], g.origin[2],
        g.spacing[0], g.spacing[1], g.spacing[2],
        g.dims[0], g.dims[1], g.dims[2])


def voxelize_polyline(g: SparseVoxelGrid, pts: np.ndarray) -> np.ndarray:
    """Union of segment traversals over consecutive polyline points."""
    pts = np.ascontiguousarray(pts, dtype=float)
    lo = np.array(g.origin)
    hi = lo + np.array(g.dims) * np.array(g.spacing)
    bad = np.nonzero(np.any((pts < lo - 1e-9) | (pts > hi + 1e-9), axis=1))[0]
    if bad.size:
        raise ValueError(f"polyline node {int(bad[0])} outside the voxel grid")
    return _voxel_core.polyline_voxels(
        pts, g.origin[0], g.origin[1], g.origin[2],
        g.spacing[0], g.spacing[1], g.spacing[2],
        g.dims[0], g.dims[1], g.dims[2])


# -- serialization -----------------------------------------------------

def serialize(g: SparseVoxelGrid) -> bytes:
    nbx, nby, nbz = g.block_dims
    if nbx * nby * nbz > 1 << 24:
        raise ValueError("grid too large for 3-byte block indices")
    header = _HEADER.pack(_MAGIC, *g.dims, *g.spacing, *g.origin,
                          len(g._blocks))
    records = []
    for key, word in g._blocks.items():
        bx, by, bz = _unmorton(np.uint64(key))
        lin = int(bx) + nbx * (int(by) + nby * int(bz))
        records.append((lin, word))
    records.sort()
    payload = bytearray()
    for lin, word in records:
        payload += lin.to_bytes(3, "little")
        payload += word.to_bytes(8, "little")
    return header + bytes(payload)


def deserialize(data: bytes) -> SparseVoxelGrid:
    if len(data) < _HEADER.size:
        raise ValueError("truncated voxel grid header")
    fields = _HEADER.unpack_from(data, 0)
    if fields[0] != _MAGIC:
        raise ValueError("bad voxel grid magic")
    dims = fields[1:4]
    spacing = fields[4:7]
    origin = fields[7:10]
    nblocks = fields[10]
    if len(data) != _HEADER.size + 11 * nblocks:
        raise ValueError("truncated voxel grid payload")
    g = SparseVoxelGrid(dims, spacing, origin)
    nbx, nby, nbz = g.block_dims
    total = nbx * nby * nbz
    off = _HEADER.size
    blocks = {}
    for _ in range(nblocks):
        lin = int.from_bytes(data[off:off + 3], "little")
        word = int.from_bytes(data[off + 3:off + 11], "little")
        off += 11
        if lin >= total:
            raise ValueError("block index out of range")
        bx = lin % nbx
        by = (lin // nbx) % nby
        bz = lin // (nbx * nby)
        key = int(_morton(np.uint64(bx), np.uint64(by), np.uint64(bz)))
        blocks[key] = word
    g._blocks = blocks
    return g


def save(g: SparseVoxelGrid, path):
    with open(path, "wb") as f:
        f.write(serialize(g))


def load(path) -> SparseVoxelGrid:
    with open(path, "rb") as f:
        return deserialize(f.read())


def to_text(g: SparseVoxelGrid) -> str:
    """Debug export: one 'i j k' line per occupied voxel."""
    lines = [f"{i} {j} {k}" for i, j, k in g.occupied_voxels()]
    return "\n".join(lines) + ("\n" if lines else "")


def indices_collide_with(g: SparseVoxelGrid, idx: np.ndarray) -> bool:
    """True if any of the (n, 3) voxel indices is occupied in g."""
    if idx.size == 0 or not g._blocks:
        return False
    keys, words = g.packed_blocks()
    return bool(_voxel_core.indices_collide(
        np.ascontiguousarray(idx, dtype=np.int64), keys, words))
