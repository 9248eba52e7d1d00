"""Obstacle environments: raw-volume ingestion, dilation by the robot
radius, free-interior goal regions, and synthetic scene generators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .voxel import SparseVoxelGrid, dilate_sphere


@dataclass(frozen=True)
class InsertionPose:
    position: tuple
    direction: tuple  # unit z-axis of the robot base in grid frame


@dataclass
class AnatomyEnvironment:
    raw: SparseVoxelGrid
    dilated: SparseVoxelGrid
    free_interior: SparseVoxelGrid
    insertion: InsertionPose
    robot_radius: float
    workspace_box: tuple  # ((xmin,ymin,zmin), (xmax,ymax,zmax)) mm
    _goal_cache: np.ndarray = field(default=None, repr=False)

    def sample_goal(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform draw over free-interior voxel centers, mm."""
        if self._goal_cache is None:
            vox = self.free_interior.occupied_voxels()
            if vox.shape[0] == 0:
                raise ValueError("environment has no free interior")
            self._goal_cache = vox
        vox = self._goal_cache
        pick = vox[rng.integers(vox.shape[0])]
        return (np.array(self.free_interior.origin)
                + (pick + 0.5) * np.array(self.free_interior.spacing))


def sample_goal(env: AnatomyEnvironment, rng: np.random.Generator):
    return env.sample_goal(rng)


# -- ingestion ---------------------------------------------------------

_META_KEYS = ("dims", "spacing", "origin", "z_subdivide",
              "insertion_position", "insertion_direction",
              "workspace_min", "workspace_max")


def parse_metadata(text: str) -> dict:
    meta = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition(":")
        meta[key.strip()] = value.strip()
    if meta.get("format") != "tendonplan-env-v1":
        raise ValueError("unrecognized environment metadata format")
    missing = [k for k in _META_KEYS if k not in meta]
    if missing:
        raise ValueError(f"metadata missing keys: {missing}")
    out = {"format": meta["format"]}
    out["dims"] = tuple(int(v) for v in meta["dims"].split())
    out["z_subdivide"] = int(meta["z_subdivide"])
    for k in ("spacing", "origin", "insertion_position",
              "insertion_direction", "workspace_min", "workspace_max"):
        out[k] = tuple(float(v) for v in meta[k].split())
    return out


def format_metadata(meta: dict) -> str:
    lines = ["format: tendonplan-env-v1"]
    lines.append("dims: " + " ".join(str(v) for v in meta["dims"]))
    for k in ("spacing", "origin"):
        lines.append(k + ": " + " ".join(repr(float(v)) for v in meta[k]))
    lines.append(f"z_subdivide: {meta['z_subdivide']}")
    for k in ("insertion_position", "insertion_direction",
              "workspace_min", "workspace_max"):
        lines.append(k + ": " + " ".join(repr(float(v)) for v in meta[k]))
    return "\n".join(lines) + "\n"


def _free_interior_from_box(dilated: SparseVoxelGrid,
                            box: tuple) -> SparseVoxelGrid:
    """Voxels whose centers lie in the box and outside the dilated set."""
    lo = np.array(box[0])
    hi = np.array(box[1])
    origin = np.array(dilated.origin)
    spacing = np.array(dilated.spacing)
    ilo = np.maximum(np.ceil((lo - origin) / spacing - 0.5), 0).astype(int)
    ihi = np.minimum(np.floor((hi - origin) / spacing - 0.5),
                     np.array(dilated.dims) - 1).astype(int)
    free = dilated.empty_like()
    if np.any(ihi < ilo):
        return free
    dense = dilated.to_dense()
    sub = ~dense[ilo[0]:ihi[0] + 1, ilo[1]:ihi[1] + 1, ilo[2]:ihi[2] + 1]
    idx = np.argwhere(sub) + ilo
    free.add_voxels(idx)
    return free


def build_environment(raw: SparseVoxelGrid, insertion: InsertionPose,
                      robot_radius: float, workspace_box: tuple,
                      free_interior: SparseVoxelGrid | None = None
                      ) -> AnatomyEnvironment:
    dilated = dilate_sphere(raw, robot_radius)
    if free_interior is None:
        free_interior = _free_interior_from_box(dilated, workspace_box)
    ip = tuple(insertion.position)
    try:
        from .voxel import voxel_index
        i, j, k = voxel_index(dilated, ip)
        if dilated.contains_voxel(i, j, k):
            raise ValueError("insertion pose lies inside the dilated "
                             "obstacle set")
    except ValueError as e:
        if "outside" in str(e):
            raise ValueError("insertion pose outside the voxel grid") from e
        raise
    return AnatomyEnvironment(raw, dilated, free_interior, insertion,
                              robot_radius, workspace_box)


def ingest(volume_path, metadata_path, robot_radius: float
           ) -> AnatomyEnvironment:
    """Load a dense uint8 occupancy volume plus its text sidecar.

    The volume is a header-free little-endian uint8 array in x-fastest
    order.  The z axis is subdivided by the declared integer factor
    (slices replicated) to near-isotropic spacing before building grids.
    """
    with open(metadata_path) as f:
        meta = parse_metadata(f.read())
    nx, ny, nz = meta["dims"]
    data = np.fromfile(volume_path, dtype=np.uint8)
    if data.size != nx * ny * nz:
        raise ValueError(
            f"volume has {data.size} voxels, metadata declares {nx*ny*nz}")
    if np.any(data > 1):
        raise ValueError("volume is not binary (values other than 0/1)")
    vol = data.reshape((nz, ny, nx)).transpose(2, 1, 0).astype(bool)

    f_z = meta["z_subdivide"]
    if f_z < 1:
        raise ValueError("z_subdivide must be a positive integer")
    vol = np.repeat(vol, f_z, axis=2)
    sx, sy, sz = meta["spacing"]
    spacing = (sx, sy, sz / f_z)
    dims = (nx, ny, nz * f_z)

    raw = SparseVoxelGrid(dims, spacing, meta["origin"])
    raw.add_voxels(np.argwhere(vol))
    insertion = InsertionPose(meta["insertion_position"],
                              meta["insertion_direction"])
    box = (meta["workspace_min"], meta["workspace_max"])
    return build_environment(raw, insertion, robot_radius, box)


def export_volume(raw: SparseVoxelGrid, meta: dict, volume_path,
                  metadata_path):
    """Write a grid back out in the ingestion format (z_subdivide = 1)."""
    dense = raw.to_dense()
    dense.transpose(2, 1, 0).astype(np.uint8).tofile(volume_path)
    with open(metadata_path, "w") as f:
        f.write(format_metadata(meta))


# -- synthetic scenes --------------------------------------------------

DEFAULT_DIMS = (512, 512, 512)
DEFAULT_SPACING = (0.59, 0.59, 0.625)


def _default_origin(dims, spacing):
    # x/y centered on the insertion axis; z spans below and above the base
    return (-0.5 * dims[0] * spacing[0], -0.5 * dims[1] * spacing[1], -100.0)


def _slice_coords(g: SparseVoxelGrid):
    nx, ny, _ = g.dims
    xs = g.origin[0] + (np.arange(nx) + 0.5) * g.spacing[0]
    ys = g.origin[1] + (np.arange(ny) + 0.5) * g.spacing[1]
    return np.meshgrid(xs, ys, indexing="ij")


def _fill_slices(g: SparseVoxelGrid, mask_fn):
    """Populate a grid one z-slice at a time from mask_fn(X, Y, z) -> bool."""
    xg, yg = _slice_coords(g)
    for k in range(g.dims[2]):
        z = g.origin[2] + (k + 0.5) * g.spacing[2]
        mask = mask_fn(xg, yg, z)
        if not mask.any():
            continue
        ij = np.argwhere(mask)
        idx = np.empty((ij.shape[0], 3), dtype=np.int64)
        idx[:, :2] = ij
        idx[:, 2] = k
        g.add_voxels(idx)


def shell_scene(robot_radius: float = 3.0, pillar: bool = True,
                dims=DEFAULT_DIMS, spacing=DEFAULT_SPACING
                ) -> AnatomyEnvironment:
    """Closed ellipsoidal shell cavity around the insertion point.

    The robot base sits inside the cavity; an optional cylindrical pillar
    obstructs part of the interior so plans must route around it.
    """
    origin = _default_origin(dims, spacing)
    g = SparseVoxelGrid(dims, spacing, origin)
    center = np.array([0.0, 0.0, 55.0])
    semi = np.array([70.0, 70.0, 70.0])

    def mask(xg, yg, z):
        r2 = ((xg - center[0]) / semi[0]) ** 2 \
            + ((yg - center[1]) / semi[1]) ** 2 \
            + ((z - center[2]) / semi[2]) ** 2
        m = (r2 >= 1.0) & (r2 <= 1.15)
        if pillar and -10.0 <= z <= 70.0:
            m |= (xg - 28.0) ** 2 + yg ** 2 <= 7.0 ** 2
        return m

    _fill_slices(g, mask)
    insertion = InsertionPose((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))
    box = ((-38.0, -38.0, 18.0), (38.0, 38.0, 98.0))
    return build_environment(g, insertion, robot_radius, box)


def wall_scene(robot_radius: float = 3.0, wall_x: float = 30.0,
               dims=DEFAULT_DIMS, spacing=DEFAULT_SPACING
               ) -> AnatomyEnvironment:
    """A single plane wall at x = wall_x splitting the workspace."""
    origin = _default_origin(dims, spacing)
    g = SparseVoxelGrid(dims, spacing, origin)

    def mask(xg, yg, z):
        if not (-40.0 <= z <= 140.0):
            return np.zeros_like(xg, dtype=bool)
        return np.abs(xg - wall_x) <= 1.0

    _fill_slices(g, mask)
    insertion = InsertionPose((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))
    box = ((-35.0, -35.0, 20.0), (min(wall_x - 8.0, 35.0), 35.0, 90.0))
    return build_environment(g, insertion, robot_radius, box)


def corridor_scene(robot_radius: float = 3.0, tube_radius: float = 25.0,
                   dims=DEFAULT_DIMS, spacing=DEFAULT_SPACING
                   ) -> AnatomyEnvironment:
    """A straight cylindrical free corridor along +z, walls elsewhere."""
    origin = _default_origin(dims, spacing)
    g = SparseVoxelGrid(dims, spacing, origin)

    def mask(xg, yg, z):
        if not (-20.0 <= z <= 140.0):
            return np.zeros_like(xg, dtype=bool)
        r2 = xg ** 2 + yg ** 2
        return (r2 >= tube_radius ** 2) & (r2 <= (tube_radius + 2.0) ** 2)

    _fill_slices(g, mask)
    insertion = InsertionPose((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))
    half = (tube_radius - robot_radius - 4.0) / np.sqrt(2.0)
    box = ((-half, -half, 20.0), (half, half, 110.0))
    return build_environment(g, insertion, robot_radius, box)


def plate_scene(robot_radius: float = 3.0, plate_z: float = 60.0,
                hole_center=(25.0, 0.0), hole_radius: float = 16.0,
                dims=DEFAULT_DIMS, spacing=DEFAULT_SPACING
                ) -> AnatomyEnvironment:
    """A broad horizontal plate with a single off-axis hole.

    The region above the plate is only reachable by threading the hole,
    which fragments a sampled roadmap: some free configurations above the
    plate keep no free straight-line edge back to the main component.
    """
    origin = _default_origin(dims, spacing)
    g = SparseVoxelGrid(dims, spacing, origin)
    cx, cy = hole_center

    def mask(xg, yg, z):
        if abs(z - plate_z) > 1.0:
            return np.zeros_like(xg, dtype=bool)
        inside = (np.abs(xg) <= 80.0) & (np.abs(yg) <= 80.0)
        hole = (xg - cx) ** 2 + (yg - cy) ** 2 <= hole_radius ** 2
        return inside & ~hole

    _fill_slices(g, mask)
    insertion = InsertionPose((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))
    # extends past the hole on +x so goals cover the far above-plate region
    box = ((-45.0, -45.0, 10.0), (65.0, 45.0, 95.0))
    return build_environment(g, insertion, robot_radius, box)


def empty_scene(robot_radius: float = 3.0, dims=DEFAULT_DIMS,
                spacing=DEFAULT_SPACING) -> AnatomyEnvironment:
    origin = _default_origin(dims, spacing)
    g = SparseVoxelGrid(dims, spacing, origin)
    insertion = InsertionPose((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))
    box = ((-35.0, -35.0, 20.0), (35.0, 35.0, 90.0))
    return build_environment(g, insertion, robot_radius, box)
