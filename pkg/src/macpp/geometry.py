"""Mesh ingestion, surface patches, voxel grids and ray/segment queries.

Everything here is immutable once built and safe to share across worker
threads or processes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage

#: self-hit guard for ray casts, in meters
RAY_EPS = 1e-6
#: refuse to allocate grids larger than this many cells
DEFAULT_CELL_BUDGET = 50_000_000

_AREA_EPS = 1e-12


class MeshError(ValueError):
    pass


class GridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64
    normals: np.ndarray  # (T, 3) unit normals
    dropped: int = 0  # degenerate triangles removed at load time

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        """(T, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        c = self.corners
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.triangles)]
        return used.min(axis=0), used.max(axis=0)

    @cached_property
    def bvh(self) -> "BVH":
        return BVH(self.corners)


def mesh_from_arrays(vertices, triangles) -> TriangleMesh:
    """Build a mesh, dropping zero-area and out-of-range triangles."""
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    t = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if len(t) and (t.min() < 0 or t.max() >= len(v)):
        raise MeshError("triangle index out of range")
    c = v[t]
    cr = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    norm = np.linalg.norm(cr, axis=1)
    keep = 0.5 * norm > _AREA_EPS
    if not keep.any():
        raise MeshError("mesh has no non-degenerate triangles")
    normals = cr[keep] / norm[keep, None]
    return TriangleMesh(v, t[keep], normals, dropped=int((~keep).sum()))


def _read_obj(path: Path):
    verts, faces = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                if len(idx) < 3:
                    raise MeshError(f"{path}:{lineno}: face with fewer than 3 vertices")
                # fan-triangulate polygons
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def _read_stl(path: Path):
    data = path.read_bytes()
    if len(data) < 84:
        raise MeshError(f"{path}: truncated STL")
    (count,) = struct.unpack_from("<I", data, 80)
    if 84 + 50 * count != len(data):
        raise MeshError(f"{path}: not a binary STL (size mismatch)")
    rec = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    arr = np.frombuffer(data, dtype=rec, count=count, offset=84)
    flat = arr["v"].reshape(-1, 3).astype(np.float64)
    verts, inverse = np.unique(flat, axis=0, return_inverse=True)
    return verts, inverse.reshape(-1, 3)


def load_mesh(path) -> TriangleMesh:
    """Load an ASCII OBJ or binary STL file."""
    path = Path(path)
    if not path.is_file():
        raise MeshError(f"mesh file not found: {path}")
    suffix = path.suffix.lower()
    try:
        if suffix == ".obj":
            v, t = _read_obj(path)
        elif suffix == ".stl":
            v, t = _read_stl(path)
        else:
            raise MeshError(f"unsupported mesh format: {suffix}")
    except (OSError, UnicodeDecodeError, ValueError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"cannot parse {path}: {exc}") from exc
    if len(t) == 0:
        raise MeshError(f"{path}: no triangles")
    return mesh_from_arrays(v, t)


def save_obj(mesh_or_arrays, path) -> None:
    if isinstance(mesh_or_arrays, TriangleMesh):
        v, t = mesh_or_arrays.vertices, mesh_or_arrays.triangles
    else:
        v, t = mesh_or_arrays
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in np.asarray(v, dtype=float).tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for f in np.asarray(t):
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def save_stl(mesh: TriangleMesh, path) -> None:
    rec = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    arr = np.zeros(mesh.n_triangles, dtype=rec)
    arr["n"] = mesh.normals
    arr["v"] = mesh.corners
    with open(path, "wb") as fh:
        fh.write(b"macpp binary stl".ljust(80, b" "))
        fh.write(struct.pack("<I", mesh.n_triangles))
        fh.write(arr.tobytes())


# --------------------------------------------------------------------------
# surface patches


@dataclass(frozen=True, eq=False)
class SurfacePatchSet:
    centroids: np.ndarray  # (m, 3)
    normals: np.ndarray  # (m, 3)
    areas: np.ndarray  # (m,)
    source: np.ndarray  # (m,) source triangle index

    @property
    def m(self) -> int:
        return len(self.areas)

    def __len__(self) -> int:
        return self.m


def _subdivide(tri: np.ndarray, limit: float, out: list) -> None:
    a, b, c = tri
    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a))
    if area <= limit:
        out.append((tri.mean(axis=0), area))
        return
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    for sub in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)):
        _subdivide(np.array(sub), limit, out)


def sample_surface_patches(mesh: TriangleMesh, target_area: float) -> SurfacePatchSet:
    """Split every triangle by 4-way midpoint subdivision into small patches.

    A triangle is split while its area exceeds ``2 * target_area``, so patches
    cut from large triangles land in ``(target_area / 2, 2 * target_area]``.
    Patch order is (source triangle, subdivision order) and is deterministic.
    """
    if not target_area > 0:
        raise ValueError("target_area must be positive")
    cents, areas, normals, source = [], [], [], []
    for k, tri in enumerate(mesh.corners):
        out: list = []
        _subdivide(tri, 2.0 * target_area, out)
        for cen, ar in out:
            cents.append(cen)
            areas.append(ar)
            normals.append(mesh.normals[k])
            source.append(k)
    return SurfacePatchSet(
        np.array(cents), np.array(normals), np.array(areas), np.array(source, dtype=np.int64)
    )


# --------------------------------------------------------------------------
# voxel grids


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    origin: np.ndarray  # world position of the (0, 0, 0) cell corner
    resolution: float
    cells: np.ndarray  # bool, shape == dims

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.cells.shape)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + np.array(self.dims) * self.resolution

    def count(self) -> int:
        return int(self.cells.sum())

    def same_frame(self, other: "VoxelGrid") -> bool:
        return (
            self.dims == other.dims
            and self.resolution == other.resolution
            and np.array_equal(self.origin, other.origin)
        )

    def with_cells(self, cells: np.ndarray) -> "VoxelGrid":
        return VoxelGrid(self.origin, self.resolution, cells)

    def world_to_index(self, p) -> np.ndarray:
        return np.floor((np.asarray(p, dtype=float) - self.origin) / self.resolution).astype(np.int64)

    def index_to_world(self, idx) -> np.ndarray:
        """Cell-center coordinates."""
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.resolution

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.origin) and np.all(p <= self.upper))

    def in_bounds_index(self, idx) -> bool:
        idx = np.asarray(idx)
        return bool(np.all(idx >= 0) and np.all(idx < np.array(self.dims)))

    def occupied_at(self, p) -> bool:
        idx = np.minimum(self.world_to_index(p), np.array(self.dims) - 1)
        return bool(self.cells[tuple(idx)])


def _axis_tests(v0, v1, v2, half):
    """Separating-axis test between triangles and an origin-centered box.

    v0, v1, v2: (N, 3) corner coordinates relative to the box center.
    Returns a bool mask, True where triangle and box overlap (touching counts).
    """
    # box face normals
    tri_min = np.minimum(np.minimum(v0, v1), v2)
    tri_max = np.maximum(np.maximum(v0, v1), v2)
    ok = np.all((tri_min <= half) & (tri_max >= -half), axis=1)

    e0, e1, e2 = v1 - v0, v2 - v1, v0 - v2
    # triangle plane
    n = np.cross(e0, e1)
    d = np.einsum("ij,ij->i", n, v0)
    r = half * np.abs(n).sum(axis=1)
    ok &= np.abs(d) <= r

    # 9 cross-product axes: unit box axes x triangle edges
    for e in (e0, e1, e2):
        for ax in range(3):
            a = np.zeros_like(e)
            # axis = unit_ax x e
            if ax == 0:
                a[:, 1], a[:, 2] = -e[:, 2], e[:, 1]
            elif ax == 1:
                a[:, 0], a[:, 2] = e[:, 2], -e[:, 0]
            else:
                a[:, 0], a[:, 1] = -e[:, 1], e[:, 0]
            p0 = np.einsum("ij,ij->i", a, v0)
            p1 = np.einsum("ij,ij->i", a, v1)
            p2 = np.einsum("ij,ij->i", a, v2)
            rr = half * np.abs(a).sum(axis=1)
            lo = np.minimum(np.minimum(p0, p1), p2)
            hi = np.maximum(np.maximum(p0, p1), p2)
            ok &= (lo <= rr) & (hi >= -rr)
    return ok


def triangle_box_overlap(tri: np.ndarray, center, half: float) -> bool:
    """Scalar convenience wrapper around the separating-axis test."""
    c = np.asarray(center, dtype=float)
    t = np.asarray(tri, dtype=float)
    return bool(_axis_tests((t[0] - c)[None], (t[1] - c)[None], (t[2] - c)[None], half)[0])


def grid_frame(lo, hi, resolution: float, padding: float):
    """Grid origin and dims centered on an AABB expanded by padding."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    extent = hi - lo + 2 * padding
    dims = np.maximum(1, np.ceil(extent / resolution - 1e-9).astype(np.int64))
    center = (lo + hi) / 2
    origin = center - dims * resolution / 2
    return origin, tuple(int(d) for d in dims)


def voxelize(
    mesh: TriangleMesh,
    resolution: float = 1.0,
    padding: float = 0.0,
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> VoxelGrid:
    """Conservative surface voxelization: a cell is set iff it touches a triangle."""
    if not resolution > 0:
        raise GridError("resolution must be positive")
    lo, hi = mesh.bounds
    origin, dims = grid_frame(lo, hi, resolution, padding)
    total = dims[0] * dims[1] * dims[2]
    if total > cell_budget:
        raise GridError(
            f"voxel grid of {dims} = {total} cells exceeds budget {cell_budget}; "
            "raise the resolution or the budget"
        )
    cells = np.zeros(dims, dtype=bool)
    half = resolution / 2
    hi_idx = np.array(dims) - 1
    for tri in mesh.corners:
        i0 = np.clip(np.floor((tri.min(axis=0) - origin) / resolution).astype(int) - 1, 0, hi_idx)
        i1 = np.clip(np.floor((tri.max(axis=0) - origin) / resolution).astype(int) + 1, 0, hi_idx)
        ix, iy, iz = np.meshgrid(
            np.arange(i0[0], i1[0] + 1),
            np.arange(i0[1], i1[1] + 1),
            np.arange(i0[2], i1[2] + 1),
            indexing="ij",
        )
        idx = np.stack([ix.ravel(), iy.ravel(), iz.ravel()], axis=1)
        centers = origin + (idx + 0.5) * resolution
        n = len(idx)
        hit = _axis_tests(
            np.broadcast_to(tri[0], (n, 3)) - centers,
            np.broadcast_to(tri[1], (n, 3)) - centers,
            np.broadcast_to(tri[2], (n, 3)) - centers,
            half,
        )
        sel = idx[hit]
        cells[sel[:, 0], sel[:, 1], sel[:, 2]] = True
    return VoxelGrid(origin, float(resolution), cells)


def dilate(grid: VoxelGrid, radius: float) -> VoxelGrid:
    """Binary dilation by a Euclidean ball of the given radius (meters).

    A cell is set iff some occupied cell center lies within ``radius`` of its
    own center.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if radius == 0 or not grid.cells.any():
        return grid.with_cells(grid.cells.copy())
    dist = ndimage.distance_transform_edt(~grid.cells)
    return grid.with_cells(dist <= radius / grid.resolution + 1e-9)


def voxel_subtract(a: VoxelGrid, b: VoxelGrid) -> VoxelGrid:
    if not a.same_frame(b):
        raise GridError("voxel_subtract needs grids with identical origin, dims and resolution")
    return a.with_cells(a.cells & ~b.cells)


def _rle(flat: np.ndarray) -> list[int]:
    """Run lengths of a bool vector, starting with a (possibly empty) run of False."""
    flat = np.asarray(flat, dtype=bool)
    if flat.size == 0:
        return []
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return runs


def _unrle(runs, size: int) -> np.ndarray:
    out = np.zeros(size, dtype=bool)
    pos, val = 0, False
    for r in runs:
        if val:
            out[pos : pos + r] = True
        pos += r
        val = not val
    if pos != size:
        raise GridError(f"run lengths sum to {pos}, expected {size}")
    return out


def save_grid(grid: VoxelGrid, path) -> None:
    """Write ``macpp-voxels 1`` text: origin, resolution, dims, then RLE occupancy (C order)."""
    o = grid.origin
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("macpp-voxels 1\n")
        fh.write("origin {!r} {!r} {!r}\n".format(*map(float, o)))
        fh.write(f"resolution {float(grid.resolution)!r}\n")
        fh.write("dims {} {} {}\n".format(*grid.dims))
        fh.write("runs " + " ".join(map(str, _rle(grid.cells.ravel()))) + "\n")


def load_grid(path) -> VoxelGrid:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != "macpp-voxels 1":
        raise GridError(f"{path}: not a macpp voxel file")
    kv = {ln.split(None, 1)[0]: ln.split()[1:] for ln in lines[1:] if ln.strip()}
    origin = np.array([float(x) for x in kv["origin"]])
    dims = tuple(int(x) for x in kv["dims"])
    cells = _unrle([int(x) for x in kv.get("runs", [])], int(np.prod(dims))).reshape(dims)
    return VoxelGrid(origin, float(kv["resolution"][0]), cells)


# --------------------------------------------------------------------------
# ray casting


def _moller_trumbore(orig, dirs, v0, e1, e2):
    """Ray/triangle distances for broadcastable ray and triangle arrays.

    Returns t with np.inf where the ray misses. Components are written out
    explicitly so every code path produces bit-identical results for the
    same (ray, triangle) pair.
    """
    dx, dy, dz = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    px = dy * e2[..., 2] - dz * e2[..., 1]
    py = dz * e2[..., 0] - dx * e2[..., 2]
    pz = dx * e2[..., 1] - dy * e2[..., 0]
    det = e1[..., 0] * px + e1[..., 1] * py + e1[..., 2] * pz
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        sx = orig[..., 0] - v0[..., 0]
        sy = orig[..., 1] - v0[..., 1]
        sz = orig[..., 2] - v0[..., 2]
        u = (sx * px + sy * py + sz * pz) * inv
        qx = sy * e1[..., 2] - sz * e1[..., 1]
        qy = sz * e1[..., 0] - sx * e1[..., 2]
        qz = sx * e1[..., 1] - sy * e1[..., 0]
        v = (dx * qx + dy * qy + dz * qz) * inv
        t = (e2[..., 0] * qx + e2[..., 1] * qy + e2[..., 2] * qz) * inv
        ok = (np.abs(det) > 1e-14) & (u >= 0) & (v >= 0) & (u + v <= 1)
    return np.where(ok, t, np.inf)


def _closest(t, max_dist):
    """Index and distance of the nearest valid hit along the last axis (ties: lowest index)."""
    t = np.where((t > RAY_EPS) & (t <= max_dist[..., None]), t, np.inf)
    k = np.argmin(t, axis=-1)
    best = np.take_along_axis(t, k[..., None], axis=-1)[..., 0]
    return best, k


def cast_rays_brute(mesh: TriangleMesh, origins, dirs, max_dist):
    """Reference all-triangles scan. Returns (distance, triangle) arrays; miss = (inf, -1)."""
    origins = np.atleast_2d(np.asarray(origins, float))
    dirs = np.atleast_2d(np.asarray(dirs, float))
    max_dist = np.broadcast_to(np.asarray(max_dist, float), (len(origins),))
    c = mesh.corners
    v0, e1, e2 = c[:, 0], c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]
    t = _moller_trumbore(origins[:, None, :], dirs[:, None, :], v0[None], e1[None], e2[None])
    best, k = _closest(t, max_dist)
    tri = np.where(np.isfinite(best), k, -1)
    return best, tri


class BVH:
    """Bounding volume hierarchy over triangles, traversed with ray packets."""

    def __init__(self, corners: np.ndarray, leaf_size: int = 4):
        self.leaf_size = leaf_size
        self.corners = corners
        cen = corners.mean(axis=1)
        tmin, tmax = corners.min(axis=1), corners.max(axis=1)
        lo, hi, left, right, start, count = [], [], [], [], [], []
        order = np.arange(len(corners))
        perm = []

        def build(ids):
            node = len(lo)
            lo.append(tmin[ids].min(axis=0))
            hi.append(tmax[ids].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(len(perm))
            count.append(0)
            if len(ids) <= leaf_size:
                perm.extend(ids.tolist())
                count[node] = len(ids)
                return node
            c = cen[ids]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            srt = ids[np.argsort(c[:, axis], kind="stable")]
            mid = len(srt) // 2
            left[node] = build(srt[:mid])
            right[node] = build(srt[mid:])
            return node

        build(order)
        self.lo, self.hi = np.array(lo), np.array(hi)
        self.left, self.right = np.array(left), np.array(right)
        self.start, self.count = np.array(start), np.array(count)
        self.perm = np.array(perm, dtype=np.int64)
        c = corners[self.perm]
        self.v0, self.e1, self.e2 = c[:, 0], c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]

    def cast(self, origins, dirs, max_dist):
        origins = np.atleast_2d(np.asarray(origins, float))
        dirs = np.atleast_2d(np.asarray(dirs, float))
        n = len(origins)
        max_dist = np.array(np.broadcast_to(np.asarray(max_dist, float), (n,)))
        best_t = np.full(n, np.inf)
        best_k = np.full(n, -1, dtype=np.int64)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_d = 1.0 / dirs
        stack = [(0, np.arange(n))]
        while stack:
            node, rays = stack.pop()
            o, inv = origins[rays], inv_d[rays]
            with np.errstate(invalid="ignore"):
                t1 = (self.lo[node] - o) * inv
                t2 = (self.hi[node] - o) * inv
            near, far = np.minimum(t1, t2), np.maximum(t1, t2)
            # 0 * inf on a slab plane gives nan; a ray lying in the plane is inside that slab
            flat = np.isnan(near) | np.isnan(far)
            near[flat], far[flat] = -np.inf, np.inf
            tnear, tfar = near.max(axis=1), far.min(axis=1)
            limit = np.minimum(best_t[rays], max_dist[rays])
            keep = (tnear <= tfar) & (tfar >= RAY_EPS) & (tnear <= limit)
            rays = rays[keep]
            if rays.size == 0:
                continue
            cnt = self.count[node]
            if cnt:
                s = slice(self.start[node], self.start[node] + cnt)
                t = _moller_trumbore(
                    origins[rays][:, None], dirs[rays][:, None], self.v0[s][None], self.e1[s][None], self.e2[s][None]
                )
                t = np.where((t > RAY_EPS) & (t <= max_dist[rays, None]), t, np.inf)
                tri = self.perm[s]
                for j in range(cnt):
                    tj = t[:, j]
                    cur_t, cur_k = best_t[rays], best_k[rays]
                    better = (tj < cur_t) | ((tj == cur_t) & np.isfinite(tj) & (tri[j] < cur_k))
                    if better.any():
                        r = rays[better]
                        best_t[r] = tj[better]
                        best_k[r] = tri[j]
            else:
                stack.append((self.right[node], rays))
                stack.append((self.left[node], rays))
        return best_t, best_k


def cast_rays(mesh: TriangleMesh, origins, dirs, max_dist):
    """BVH-accelerated batch ray cast; same result contract as :func:`cast_rays_brute`."""
    return mesh.bvh.cast(origins, dirs, max_dist)


def ray_hit(mesh: TriangleMesh, origin, direction, max_dist: float):
    """Nearest hit in (RAY_EPS, max_dist] as ``(distance, triangle)``, or None."""
    t, k = cast_rays(mesh, np.asarray(origin, float)[None], np.asarray(direction, float)[None], max_dist)
    if k[0] < 0:
        return None
    return float(t[0]), int(k[0])


# --------------------------------------------------------------------------
# segment traversal


def traverse_cells(grid: VoxelGrid, p0, p1):
    """Yield the index of every cell the segment p0-p1 passes through (3D DDA)."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if not (grid.contains(p0) and grid.contains(p1)):
        raise GridError("segment endpoint outside grid bounds")
    dims = grid.dims
    res = grid.resolution
    a = (p0 - grid.origin) / res
    b = (p1 - grid.origin) / res
    cell = [min(int(np.floor(a[i])), dims[i] - 1) for i in range(3)]
    end = [min(int(np.floor(b[i])), dims[i] - 1) for i in range(3)]
    d = b - a
    step, t_max, t_delta = [0, 0, 0], [np.inf] * 3, [np.inf] * 3
    for i in range(3):
        if d[i] > 0:
            step[i] = 1
            t_max[i] = (cell[i] + 1 - a[i]) / d[i]
            t_delta[i] = 1.0 / d[i]
        elif d[i] < 0:
            step[i] = -1
            t_max[i] = (cell[i] - a[i]) / d[i]
            t_delta[i] = -1.0 / d[i]
    yield tuple(cell)
    guard = sum(abs(end[i] - cell[i]) for i in range(3)) + 3
    while cell != end and guard > 0:
        i = int(np.argmin(t_max))
        if t_max[i] > 1.0:
            break
        cell[i] += step[i]
        if not 0 <= cell[i] < dims[i]:
            break
        t_max[i] += t_delta[i]
        guard -= 1
        yield tuple(cell)


def segment_collision_free(grid: VoxelGrid, p0, p1) -> bool:
    """True iff no occupied cell of ``grid`` lies on the segment."""
    cells = grid.cells
    return not any(cells[c] for c in traverse_cells(grid, p0, p1))
