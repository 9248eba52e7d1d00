"""Numba kernels for the sparse voxel grid: segment traversal and dilation."""

import numba
import numpy as np


@numba.njit(cache=True)
def traverse_segment(ax, ay, az, bx, by, bz,
                     ox, oy, oz, dx, dy, dz, nx, ny, nz):
    """Voxels crossed by the segment a-b, 6-connected incremental stepping.

    Coordinates in mm, grid origin o and spacing d.  Ties at voxel corners
    step one axis at a time so every touched voxel is visited (conservative).
    Returns an (n, 3) int64 array of voxel indices.
    """
    # entry/exit voxels by flooring; endpoints assumed in bounds
    ia = int(np.floor((ax - ox) / dx))
    ja = int(np.floor((ay - oy) / dy))
    ka = int(np.floor((az - oz) / dz))
    ib = int(np.floor((bx - ox) / dx))
    jb = int(np.floor((by - oy) / dy))
    kb = int(np.floor((bz - oz) / dz))
    if ia < 0:
        ia = 0
    if ia > nx - 1:
        ia = nx - 1
    if ja < 0:
        ja = 0
    if ja > ny - 1:
        ja = ny - 1
    if ka < 0:
        ka = 0
    if ka > nz - 1:
        ka = nz - 1
    if ib < 0:
        ib = 0
    if ib > nx - 1:
        ib = nx - 1
    if jb < 0:
        jb = 0
    if jb > ny - 1:
        jb = ny - 1
    if kb < 0:
        kb = 0
    if kb > nz - 1:
        kb = nz - 1

    max_n = abs(ib - ia) + abs(jb - ja) + abs(kb - ka) + 1
    out = np.empty((max_n, 3), dtype=np.int64)
    i, j, k = ia, ja, ka
    out[0, 0] = i
    out[0, 1] = j
    out[0, 2] = k
    n = 1

    vx = bx - ax
    vy = by - ay
    vz = bz - az

    step_x = 1 if vx > 0.0 else -1
    step_y = 1 if vy > 0.0 else -1
    step_z = 1 if vz > 0.0 else -1

    big = 1.0e300
    if vx != 0.0:
        nxt = ox + (i + (1 if step_x > 0 else 0)) * dx
        t_max_x = (nxt - ax) / vx
        t_dx = dx / abs(vx)
    else:
        t_max_x = big
        t_dx = big
    if vy != 0.0:
        nxt = oy + (j + (1 if step_y > 0 else 0)) * dy
        t_max_y = (nxt - ay) / vy
        t_dy = dy / abs(vy)
    else:
        t_max_y = big
        t_dy = big
    if vz != 0.0:
        nxt = oz + (k + (1 if step_z > 0 else 0)) * dz
        t_max_z = (nxt - az) / vz
        t_dz = dz / abs(vz)
    else:
        t_max_z = big
        t_dz = big

    while n < max_n:
        if t_max_x <= t_max_y and t_max_x <= t_max_z:
            if i == ib:
                break
            i += step_x
            t_max_x += t_dx
        elif t_max_y <= t_max_z:
            if j == jb:
                break
            j += step_y
            t_max_y += t_dy
        else:
            if k == kb:
                break
            k += step_z
            t_max_z += t_dz
        out[n, 0] = i
        out[n, 1] = j
        out[n, 2] = k
        n += 1

    return out[:n]


@numba.njit(cache=True)
def dilate_into_blocks(vox, offsets, nx, ny, nz, nbx, nby, nbz, words):
    """OR the ball stencil around every occupied voxel into a dense block array.

    vox: (n, 3) occupied voxel indices; offsets: (m, 3) stencil;
    words: flat uint64 array of nbx*nby*nbz block words, mutated in place.
    Block bit layout: bit = lx + 4*ly + 16*lz for local offsets in 0..3.
    """
    for a in range(vox.shape[0]):
        x0 = vox[a, 0]
        y0 = vox[a, 1]
        z0 = vox[a, 2]
        for b in range(offsets.shape[0]):
            x = x0 + offsets[b, 0]
            if x < 0 or x >= nx:
                continue
            y = y0 + offsets[b, 1]
            if y < 0 or y >= ny:
                continue
            z = z0 + offsets[b, 2]
            if z < 0 or z >= nz:
                continue
            bi = (x >> 2) + nbx * ((y >> 2) + nby * (z >> 2))
            bit = (x & 3) + 4 * (y & 3) + 16 * (z & 3)
            words[bi] |= np.uint64(1) << np.uint64(bit)


@numba.njit(cache=True)
def polyline_voxels(pts, ox, oy, oz, dx, dy, dz, nx, ny, nz):
    """Union of segment traversals over consecutive points of a polyline."""
    m = pts.shape[0]
    if m == 1:
        out = np.empty((1, 3), dtype=np.int64)
        out[0, 0] = int(np.floor((pts[0, 0] - ox) / dx))
        out[0, 1] = int(np.floor((pts[0, 1] - oy) / dy))
        out[0, 2] = int(np.floor((pts[0, 2] - oz) / dz))
        return out
    chunks = []
    total = 0
    for s in range(m - 1):
        c = traverse_segment(pts[s, 0], pts[s, 1], pts[s, 2],
                             pts[s + 1, 0], pts[s + 1, 1], pts[s + 1, 2],
                             ox, oy, oz, dx, dy, dz, nx, ny, nz)
        chunks.append(c)
        total += c.shape[0]
    out = np.empty((total, 3), dtype=np.int64)
    at = 0
    for c in chunks:
        out[at:at + c.shape[0]] = c
        at += c.shape[0]
    return out


@numba.njit(cache=True)
def _part1by2_scalar(x):
    x = np.uint64(x)
    x = (x | (x << np.uint64(16))) & np.uint64(0x030000FF)
    x = (x | (x << np.uint64(8))) & np.uint64(0x0300F00F)
    x = (x | (x << np.uint64(4))) & np.uint64(0x030C30C3)
    x = (x | (x << np.uint64(2))) & np.uint64(0x09249249)
    return x


@numba.njit(cache=True)
def morton_scalar(bx, by, bz):
    return (_part1by2_scalar(bx) | (_part1by2_scalar(by) << np.uint64(1))
            | (_part1by2_scalar(bz) << np.uint64(2)))


@numba.njit(cache=True)
def indices_collide(idx, keys_sorted, words_sorted):
    """True if any voxel index hits an occupied bit in the packed blocks.

    keys_sorted / words_sorted are the grid's Morton block keys (ascending)
    and their occupancy words; lookup by binary search.
    """
    n = keys_sorted.shape[0]
    if n == 0:
        return False
    for a in range(idx.shape[0]):
        key = morton_scalar(idx[a, 0] >> 2, idx[a, 1] >> 2, idx[a, 2] >> 2)
        lo = 0
        hi = n
        while lo < hi:
            mid = (lo + hi) >> 1
            if keys_sorted[mid] < key:
                lo = mid + 1
            else:
                hi = mid
        if lo < n and keys_sorted[lo] == key:
            bit = (idx[a, 0] & 3) + 4 * (idx[a, 1] & 3) + 16 * (idx[a, 2] & 3)
            if (words_sorted[lo] >> np.uint64(bit)) & np.uint64(1):
                return True
    return False


@numba.njit(cache=True, fastmath=True)
def shape_voxel_distance(pos_a, frac_a, pos_b, frac_b,
                         ox, oy, oz, dx, dy, dz):
    """Max voxel-index deviation between two polylines at matched
    normalized arclength fractions (the finer shape's fractions)."""
    if pos_a.shape[0] >= pos_b.shape[0]:
        fine_p, fine_f = pos_a, frac_a
        coarse_p, coarse_f = pos_b, frac_b
    else:
        fine_p, fine_f = pos_b, frac_b
        coarse_p, coarse_f = pos_a, frac_a
    m = fine_p.shape[0]
    mc = coarse_p.shape[0]
    best = 0
    j = 0
    for i in range(m):
        f = fine_f[i]
        if mc == 1:
            cx = coarse_p[0, 0]
            cy = coarse_p[0, 1]
            cz = coarse_p[0, 2]
        else:
            while j < mc - 2 and coarse_f[j + 1] < f:
                j += 1
            span = coarse_f[j + 1] - coarse_f[j]
            t = 0.0 if span <= 0.0 else (f - coarse_f[j]) / span
            if t < 0.0:
                t = 0.0
            if t > 1.0:
                t = 1.0
            cx = coarse_p[j, 0] + t * (coarse_p[j + 1, 0] - coarse_p[j, 0])
            cy = coarse_p[j, 1] + t * (coarse_p[j + 1, 1] - coarse_p[j, 1])
            cz = coarse_p[j, 2] + t * (coarse_p[j + 1, 2] - coarse_p[j, 2])
        ia = np.floor((fine_p[i, 0] - ox) / dx) - np.floor((cx - ox) / dx)
        ib = np.floor((fine_p[i, 1] - oy) / dy) - np.floor((cy - oy) / dy)
        ic = np.floor((fine_p[i, 2] - oz) / dz) - np.floor((cz - oz) / dz)
        d = max(abs(ia), max(abs(ib), abs(ic)))
        if d > best:
            best = int(d)
    return best
