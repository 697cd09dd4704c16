"""Coverage probabilistic roadmap: dual path-primitive sampling over a voxel shell.

The roadmap's nodes are via-points sampled in the shell between the
``d_safe`` and ``d_vis`` dilations of the structure; its edges are
collision-free local paths that carry their length and the set of surface
patches seen while flying them.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from skimage.graph import MCP_Geometric

from .geometry import (
    GridError,
    SurfacePatchSet,
    TriangleMesh,
    VoxelGrid,
    _rle,
    _unrle,
    cast_rays,
    dilate,
    mesh_from_arrays,
    sample_surface_patches,
    segment_collision_free,
    voxel_subtract,
    voxelize,
)
from .visibility import CameraModel, CoverageBits, path_visibility, visibility_matrix

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class CPRMBuildError(RuntimeError):
    def __init__(self, message, uncoverable=()):
        super().__init__(message)
        self.uncoverable = list(uncoverable)


@dataclass(frozen=True)
class SamplingParams:
    d_vis: float = 50.0
    d_safe: float = 2.0
    d_max: float = 30.0
    m_min: int = 0
    n_desired: int = 100
    target_patch_area: float = 4.0
    initial_sample_count: int = 100
    dual_batch_size: int = 30
    max_iterations: int = 20
    rng_seed: int = 0
    voxel_resolution: float = 1.0
    path_spacing: float = 2.0
    dual_attempts: int = 50
    # via-points below this height are discarded (ground clearance); None disables
    min_altitude: float | None = None

    def __post_init__(self):
        if not 0 < self.d_safe < self.d_vis:
            raise ValueError("need 0 < d_safe < d_vis")
        if not self.d_max > 0:
            raise ValueError("d_max must be positive")
        if self.m_min < 0 or self.n_desired < 0:
            raise ValueError("m_min and n_desired must be non-negative")
        for name in ("initial_sample_count", "dual_batch_size", "max_iterations", "dual_attempts"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.target_patch_area > 0 or not self.voxel_resolution > 0 or not self.path_spacing > 0:
            raise ValueError("target_patch_area, voxel_resolution and path_spacing must be positive")


@dataclass(frozen=True)
class ViaPoint:
    id: int
    position: np.ndarray
    orientation: np.ndarray  # unit view direction


@dataclass(frozen=True)
class PathPrimitive:
    u: int
    v: int
    polyline: np.ndarray  # from node u to node v
    length: float
    coverage: CoverageBits | None = None

    def oriented(self, start: int) -> np.ndarray:
        """Polyline as flown when leaving ``start``."""
        if start == self.u:
            return self.polyline
        if start == self.v:
            return self.polyline[::-1]
        raise ValueError(f"node {start} is not an endpoint of edge ({self.u}, {self.v})")


def polyline_length(pts) -> float:
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


@dataclass
class Scene:
    """Everything derived from the mesh that sampling, planning and replay share."""

    mesh: TriangleMesh
    patches: SurfacePatchSet
    occupancy: VoxelGrid  # raw surface voxels
    safegrid: VoxelGrid  # occupancy dilated by d_safe
    shell: VoxelGrid  # feasible via-point cells
    _shell_cells: np.ndarray | None = field(default=None, repr=False)

    @property
    def shell_cells(self) -> np.ndarray:
        if self._shell_cells is None:
            self._shell_cells = np.argwhere(self.shell.cells)
        return self._shell_cells


def prepare_scene(mesh: TriangleMesh, params: SamplingParams) -> Scene:
    patches = sample_surface_patches(mesh, params.target_patch_area)
    occ = voxelize(mesh, params.voxel_resolution, padding=params.d_vis)
    d1 = dilate(occ, params.d_vis)
    d2 = dilate(occ, params.d_safe)
    shell = voxel_subtract(d1, d2)
    if params.min_altitude is not None:
        z = shell.origin[2] + (np.arange(shell.dims[2]) + 0.5) * shell.resolution
        cells = shell.cells.copy()
        cells[:, :, z < params.min_altitude] = False
        shell = shell.with_cells(cells)
    return Scene(mesh, patches, occ, d2, shell)


# --------------------------------------------------------------------------
# via-point sampling


def assign_orientation(position, mesh: TriangleMesh, patches: SurfacePatchSet, d_vis: float = np.inf) -> np.ndarray:
    """Face the nearest patch centroid that has a clear line of sight.

    Ties go to the lower patch index. Falls back to the nearest centroid when
    nothing within ``d_vis`` is unoccluded.
    """
    p = np.asarray(position, dtype=float)
    vec = patches.centroids - p
    dist = np.linalg.norm(vec, axis=1)
    order = np.lexsort((np.arange(len(dist)), dist))
    order = order[dist[order] > 0]
    if order.size == 0:
        raise ValueError("position coincides with every patch centroid")
    near = order[dist[order] <= d_vis]
    for start in range(0, len(near), 64):
        chunk = near[start : start + 64]
        u = vec[chunk] / dist[chunk, None]
        _, tri = cast_rays(mesh, np.broadcast_to(p, (len(chunk), 3)), u, dist[chunk] * (1 + 1e-9) + 1e-6)
        clear = np.flatnonzero(tri == patches.source[chunk])
        if clear.size:
            return u[clear[0]]
    k = order[0]
    return vec[k] / dist[k]


def _jittered(scene: Scene, cells: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    jitter = rng.random((len(cells), 3))
    return scene.shell.origin + (cells + jitter) * scene.shell.resolution


def random_sample_viapoints(
    scene: Scene, count: int, rng: np.random.Generator, start_id: int = 0, d_vis: float = np.inf
) -> list[ViaPoint]:
    """Uniform draws over shell cells, jittered uniformly inside each cell."""
    if count == 0:
        return []
    cells = scene.shell_cells
    if len(cells) == 0:
        raise CPRMBuildError("via-point shell is empty")
    pick = cells[rng.integers(len(cells), size=count)]
    pts = _jittered(scene, pick, rng)
    return [
        ViaPoint(start_id + i, p, assign_orientation(p, scene.mesh, scene.patches, d_vis))
        for i, p in enumerate(pts)
    ]


def dual_sample_viapoints(
    scene: Scene,
    unseen,
    count: int,
    rng: np.random.Generator,
    cam: CameraModel,
    attempts: int = 50,
    start_id: int = 0,
) -> list[ViaPoint]:
    """Via-points biased toward unseen patches.

    For each point a target patch is drawn uniformly from ``unseen``; up to
    ``attempts`` shell positions within ``d_vis`` of it are tried, each
    aimed at the patch. The first that sees it wins. If none does, one
    uniform shell sample is emitted instead, so exactly ``count`` points
    come back.
    """
    unseen = np.asarray(list(unseen), dtype=np.int64)
    if unseen.size == 0:
        raise ValueError("dual sampling needs at least one unseen patch")
    cells = scene.shell_cells
    if len(cells) == 0:
        raise CPRMBuildError("via-point shell is empty")
    centers = scene.shell.index_to_world(cells)
    patches = scene.patches
    out = []
    for i in range(count):
        k = int(unseen[rng.integers(len(unseen))])
        c = patches.centroids[k]
        near = np.flatnonzero(np.linalg.norm(centers - c, axis=1) <= cam.d_vis)
        found = None
        if near.size and attempts > 0:
            pick = cells[near[rng.integers(near.size, size=attempts)]]
            pts = _jittered(scene, pick, rng)
            dirs = c - pts
            dirs /= np.linalg.norm(dirs, axis=1)[:, None]
            single = SurfacePatchSet(
                patches.centroids[k : k + 1], patches.normals[k : k + 1], patches.areas[k : k + 1], patches.source[k : k + 1]
            )
            seen = visibility_matrix(pts, dirs, single, scene.mesh, cam)[:, 0]
            hits = np.flatnonzero(seen)
            if hits.size:
                found = ViaPoint(start_id + i, pts[hits[0]], dirs[hits[0]])
        if found is None:
            p = _jittered(scene, cells[rng.integers(len(cells), size=1)], rng)[0]
            found = ViaPoint(start_id + i, p, assign_orientation(p, scene.mesh, patches, cam.d_vis))
        out.append(found)
    return out


# --------------------------------------------------------------------------
# local planner


def _shortcut(pts: list, safegrid: VoxelGrid) -> list | None:
    out = [pts[0]]
    i, last = 0, len(pts) - 1
    while i < last:
        j = last
        while j > i and not segment_collision_free(safegrid, pts[i], pts[j]):
            j -= 1
        if j == i:
            return None
        out.append(pts[j])
        i = j
    return out


def local_plan(a: ViaPoint, b: ViaPoint, safegrid: VoxelGrid, d_max: float) -> PathPrimitive | None:
    """Collision-free path from a to b no longer than d_max, or None.

    Tries the straight segment first, then a shortest 26-connected path
    through free cells of ``safegrid`` (searched inside a d_max box around
    the endpoints) followed by greedy shortcutting.
    """
    pa, pb = np.asarray(a.position, float), np.asarray(b.position, float)
    direct = float(np.linalg.norm(pb - pa))
    if direct > d_max:
        return None
    try:
        if segment_collision_free(safegrid, pa, pb):
            return PathPrimitive(a.id, b.id, np.array([pa, pb]), direct)
    except GridError:
        return None
    if safegrid.occupied_at(pa) or safegrid.occupied_at(pb):
        return None

    res = safegrid.resolution
    mid = (pa + pb) / 2
    dims = np.array(safegrid.dims)
    lo = np.clip(safegrid.world_to_index(mid - d_max / 2) - 1, 0, dims - 1)
    hi = np.clip(safegrid.world_to_index(mid + d_max / 2) + 1, 0, dims - 1)
    sub = safegrid.cells[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1]
    ia = np.minimum(safegrid.world_to_index(pa), dims - 1) - lo
    ib = np.minimum(safegrid.world_to_index(pb), dims - 1) - lo
    costs = np.where(sub, np.inf, 1.0)
    mcp = MCP_Geometric(costs, fully_connected=True)
    cum, _ = mcp.find_costs([tuple(ia)], [tuple(ib)], max_cumulative_cost=d_max / res + 2.0)
    if not np.isfinite(cum[tuple(ib)]):
        return None
    chain = [np.asarray(c) + lo for c in mcp.traceback(tuple(ib))]
    pts = [pa] + [safegrid.index_to_world(c) for c in chain[1:-1]] + [pb]
    smooth = _shortcut(pts, safegrid)
    if smooth is None:
        return None
    poly = np.array(smooth)
    length = polyline_length(poly)
    if length > d_max:
        return None
    return PathPrimitive(a.id, b.id, poly, length)


# --------------------------------------------------------------------------
# roadmap


class CPRM:
    """Roadmap graph; nodes are ids 0..n-1, edges are indexed 0..|E|-1."""

    def __init__(self, nodes, edges, patches: SurfacePatchSet, mesh: TriangleMesh | None = None):
        self.nodes: list[ViaPoint] = list(nodes)
        self.edges: list[PathPrimitive] = list(edges)
        self.patches = patches
        self.mesh = mesh
        for i, nd in enumerate(self.nodes):
            if nd.id != i:
                raise ValueError("node ids must be 0..n-1 in order")
        adj: list[dict[int, int]] = [dict() for _ in self.nodes]
        for eid, e in enumerate(self.edges):
            if e.v in adj[e.u]:
                raise ValueError(f"duplicate edge between {e.u} and {e.v}")
            adj[e.u][e.v] = eid
            adj[e.v][e.u] = eid
        self._adj = adj
        # neighbors sorted by node id, with matching edge ids
        self.neighbors: list[list[int]] = [sorted(a) for a in adj]
        self.neighbor_edges: list[list[int]] = [[adj[v][w] for w in self.neighbors[v]] for v in range(len(adj))]
        self.edge_bits: list[int] = [e.coverage.value if e.coverage is not None else 0 for e in self.edges]
        self.edge_length: list[float] = [float(e.length) for e in self.edges]

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def m(self) -> int:
        return self.patches.m

    def edge_between(self, a: int, b: int) -> int | None:
        return self._adj[a].get(b)

    def degree(self, v: int) -> int:
        return len(self.neighbors[v])

    def ceiling(self) -> CoverageBits:
        """Union of every edge's coverage: the best any plan can do."""
        v = 0
        for b in self.edge_bits:
            v |= b
        return CoverageBits(v, self.m)

    def total_length(self) -> float:
        return float(sum(self.edge_length))

    def components(self) -> list[list[int]]:
        seen = [False] * self.n
        comps = []
        for s in range(self.n):
            if seen[s]:
                continue
            comp, stack = [], [s]
            seen[s] = True
            while stack:
                v = stack.pop()
                comp.append(v)
                for w in self.neighbors[v]:
                    if not seen[w]:
                        seen[w] = True
                        stack.append(w)
            comps.append(sorted(comp))
        return comps

    def is_connected(self) -> bool:
        return self.n > 0 and len(self.components()) == 1


def largest_component(graph: CPRM) -> CPRM:
    """Restrict to the biggest connected component, relabelling nodes in id order.

    Ties between equally sized components go to the one holding the lowest id.
    """
    comps = graph.components()
    if not comps:
        return graph
    best = max(comps, key=lambda c: (len(c), -c[0]))
    remap = {old: new for new, old in enumerate(best)}
    nodes = [ViaPoint(remap[v], graph.nodes[v].position, graph.nodes[v].orientation) for v in best]
    edges = [
        replace(e, u=remap[e.u], v=remap[e.v])
        for e in graph.edges
        if e.u in remap and e.v in remap
    ]
    return CPRM(nodes, edges, graph.patches, graph.mesh)


@dataclass
class BuildReport:
    ceiling: float
    n_nodes: int
    n_edges: int
    iterations: int
    unseen: int
    nodes_before_restriction: int
    edges_before_restriction: int
    # per-iteration (edge count, achievable coverage count), pre-restriction
    history: list = field(default_factory=list)


def _edge_coverage(args):
    e, start_dir, end_dir, patches, mesh, cam, spacing = args
    return path_visibility(e.polyline, start_dir, end_dir, patches, mesh, cam, spacing)


def build_cprm(
    mesh: TriangleMesh,
    params: SamplingParams,
    cam: CameraModel,
    rng: np.random.Generator | None = None,
    delta_d: float | None = None,
    scene: Scene | None = None,
    executor: Executor | None = None,
) -> tuple[CPRM, BuildReport]:
    """Sample via-points and path primitives until coverage and size targets are met.

    ``delta_d``, when given, is the coverage ratio the planner will demand;
    the build fails if the finished roadmap cannot reach it.
    """
    if (params.d_vis, params.d_safe) != (cam.d_vis, cam.d_safe):
        raise ValueError("SamplingParams and CameraModel disagree on d_vis / d_safe")
    if rng is None:
        rng = np.random.default_rng(params.rng_seed)
    if scene is None:
        scene = prepare_scene(mesh, params)
    patches = scene.patches
    m = patches.m

    nodes = random_sample_viapoints(scene, params.initial_sample_count, rng, 0, cam.d_vis)
    edges: list[PathPrimitive] = []
    covered = 0
    unseen = list(range(m))
    connected_upto = 0  # nodes [0, connected_upto) have had all pairs attempted
    history = []
    it = 0
    while (len(unseen) > params.m_min or len(edges) < params.n_desired) and it < params.max_iterations:
        it += 1
        if unseen:
            new = dual_sample_viapoints(scene, unseen, params.dual_batch_size, rng, cam, params.dual_attempts, len(nodes))
        else:
            new = random_sample_viapoints(scene, params.dual_batch_size, rng, len(nodes), cam.d_vis)
        nodes.extend(new)

        pos = np.array([nd.position for nd in nodes])
        fresh = []
        for j in range(connected_upto, len(nodes)):
            d = np.linalg.norm(pos[:j] - pos[j], axis=1)
            for i in np.flatnonzero(d <= params.d_max):
                e = local_plan(nodes[i], nodes[j], scene.safegrid, params.d_max)
                if e is not None:
                    fresh.append(e)
        connected_upto = len(nodes)

        jobs = [
            (e, nodes[e.u].orientation, nodes[e.v].orientation, patches, mesh, cam, params.path_spacing)
            for e in fresh
        ]
        bits = list(executor.map(_edge_coverage, jobs)) if executor else [_edge_coverage(j) for j in jobs]
        for e, b in zip(fresh, bits):
            edges.append(replace(e, coverage=b))
            covered |= b.value
        unseen = [k for k in range(m) if not (covered >> k) & 1]
        history.append((len(edges), covered.bit_count()))
        log.info("iteration %d: %d nodes, %d edges, %d/%d patches unseen", it, len(nodes), len(edges), len(unseen), m)

    full = CPRM(nodes, edges, patches, mesh)
    graph = largest_component(full)
    ceiling = graph.ceiling()
    report = BuildReport(
        ceiling=ceiling.count() / m,
        n_nodes=graph.n,
        n_edges=len(graph.edges),
        iterations=it,
        unseen=len(unseen),
        nodes_before_restriction=len(nodes),
        edges_before_restriction=len(edges),
        history=history,
    )
    if delta_d is not None and ceiling.count() < required_count(delta_d, m):
        missing = [k for k in range(m) if not ceiling[k]]
        raise CPRMBuildError(
            f"achievable coverage {report.ceiling:.4f} is below the required {delta_d}; "
            f"{len(missing)} patches cannot be seen: {missing[:20]}{' ...' if len(missing) > 20 else ''}",
            missing,
        )
    return graph, report


def required_count(delta_d: float, m: int) -> int:
    """Smallest number of covered patches whose ratio reaches delta_d."""
    return max(0, math.ceil(delta_d * m - 1e-9))


# --------------------------------------------------------------------------
# serialization


def _floats(a) -> str:
    return " ".join(repr(float(x)) for x in np.asarray(a, dtype=float).ravel())


def save_cprm(graph: CPRM, path) -> None:
    """Write the versioned text format; floats use shortest round-trip repr."""
    p = graph.patches
    lines = [f"macpp-cprm {FORMAT_VERSION}"]
    if graph.mesh is not None:
        lines.append(f"mesh {len(graph.mesh.vertices)} {graph.mesh.n_triangles}")
        lines += [f"vertex {_floats(v)}" for v in graph.mesh.vertices]
        lines += ["face {} {} {}".format(*t) for t in graph.mesh.triangles]
    lines.append(f"patches {p.m}")
    for k in range(p.m):
        lines.append(f"patch {k} {_floats(p.centroids[k])} {_floats(p.normals[k])} {float(p.areas[k])!r} {int(p.source[k])}")
    lines.append(f"nodes {graph.n}")
    for nd in graph.nodes:
        lines.append(f"node {nd.id} {_floats(nd.position)} {_floats(nd.orientation)}")
    lines.append(f"edges {len(graph.edges)}")
    for eid, e in enumerate(graph.edges):
        lines.append(f"edge {eid} {e.u} {e.v} {float(e.length)!r}")
        lines.append(f"poly {len(e.polyline)} {_floats(e.polyline)}")
        runs = _rle(e.coverage.to_mask()) if e.coverage is not None else []
        lines.append("bits " + " ".join(map(str, runs)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_cprm(path) -> CPRM:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].split() != ["macpp-cprm", str(FORMAT_VERSION)]:
        raise ValueError(f"{path}: not a macpp-cprm v{FORMAT_VERSION} file")
    verts, faces, pc, pn, pa, ps, nodes, edges = [], [], [], [], [], [], [], []
    m = None
    pending = None
    try:
        for ln in lines[1:]:
            t = ln.split()
            if not t:
                continue
            tag = t[0]
            if tag == "vertex":
                verts.append([float(x) for x in t[1:4]])
            elif tag == "face":
                faces.append([int(x) for x in t[1:4]])
            elif tag == "patches":
                m = int(t[1])
            elif tag == "patch":
                v = [float(x) for x in t[2:9]]
                pc.append(v[0:3])
                pn.append(v[3:6])
                pa.append(v[6])
                ps.append(int(t[9]))
            elif tag == "node":
                v = [float(x) for x in t[2:8]]
                nodes.append(ViaPoint(int(t[1]), np.array(v[:3]), np.array(v[3:])))
            elif tag == "edge":
                pending = (int(t[2]), int(t[3]), float(t[4]))
            elif tag == "poly":
                poly = np.array([float(x) for x in t[2:]]).reshape(int(t[1]), 3)
                pending = pending + (poly,)
            elif tag == "bits":
                u, v, length, poly = pending
                mask = _unrle([int(x) for x in t[1:]], m)
                edges.append(PathPrimitive(u, v, poly, length, CoverageBits.from_mask(mask)))
                pending = None
    except (ValueError, IndexError, TypeError, GridError) as exc:
        raise ValueError(f"{path}: corrupt CPRM file: {exc}") from exc
    patches = SurfacePatchSet(
        np.array(pc).reshape(-1, 3), np.array(pn).reshape(-1, 3), np.array(pa), np.array(ps, dtype=np.int64)
    )
    if m is None or patches.m != m:
        raise ValueError(f"{path}: patch table length mismatch")
    mesh = mesh_from_arrays(verts, faces) if faces else None
    return CPRM(nodes, edges, patches, mesh)
