from __future__ import annotations

import heapq
import sys
from pathlib import Path

import numpy as np
import pytest

from macpp.cprm import CPRM, PathPrimitive, ViaPoint, required_count
from macpp.geometry import SurfacePatchSet, mesh_from_arrays
from macpp.visibility import CoverageBits

ROOT = Path(__file__).resolve().parents[1]
COURTYARD_INI = ROOT / "configs" / "courtyard.ini"

sys.path.insert(0, str(Path(__file__).parent))


def dummy_patches(m: int) -> SurfacePatchSet:
    c = np.zeros((m, 3))
    c[:, 0] = np.arange(m)
    n = np.tile([0.0, 0.0, 1.0], (m, 1))
    return SurfacePatchSet(c, n, np.ones(m), np.zeros(m, dtype=np.int64))


def abstract_cprm(n: int, edges, m: int) -> CPRM:
    """Roadmap from (u, v, length, covered patch ids) tuples; geometry is a placeholder."""
    nodes = [ViaPoint(i, np.array([float(i), 0.0, 10.0]), np.array([0.0, 1.0, 0.0])) for i in range(n)]
    prims = []
    for u, v, length, bits in edges:
        poly = np.array([nodes[u].position, nodes[v].position])
        prims.append(PathPrimitive(u, v, poly, float(length), CoverageBits.from_indices(bits, m)))
    return CPRM(nodes, prims, dummy_patches(m))


# hand-traced decode fixture: 6 nodes, 8 edges, 6 patches
GOLDEN_EDGES = [
    (0, 1, 2.0, [0]),  # e0
    (0, 2, 3.0, [1]),  # e1
    (1, 2, 1.0, []),  # e2
    (1, 3, 4.0, [2, 3]),  # e3
    (2, 4, 2.0, [4]),  # e4
    (3, 4, 1.5, []),  # e5
    (3, 5, 2.5, [5]),  # e6
    (4, 5, 3.0, [0, 5]),  # e7
]
GOLDEN_KEYS = [0.30, 1.70, 0.90, 1.50, 1.99, 0.80, 1.40, 1.00, 0.10, 0.20, 1.30, 1.90]


@pytest.fixture
def golden_graph() -> CPRM:
    return abstract_cprm(6, GOLDEN_EDGES, 6)


def random_connected_cprm(rng: np.random.Generator, n: int, m: int = 6, extra: int = 3) -> CPRM:
    """Random spanning tree plus a few chords; every patch sits on one or two edges."""
    pairs = set()
    for v in range(1, n):
        pairs.add((int(rng.integers(v)), v))
    for _ in range(extra):
        a, b = sorted(int(x) for x in rng.choice(n, 2, replace=False))
        pairs.add((a, b))
    pairs = sorted(pairs)
    bits = [[] for _ in pairs]
    for k in range(m):
        for e in rng.choice(len(pairs), size=int(rng.integers(1, 3)), replace=False):
            bits[int(e)].append(k)
    edges = [(u, v, round(float(rng.uniform(1.0, 10.0)), 3), sorted(b)) for (u, v), b in zip(pairs, bits)]
    return abstract_cprm(n, edges, m)


@pytest.fixture(scope="session")
def courtyard_mesh():
    from macpp import scenes

    v, t, _ = scenes.courtyard_building()
    return mesh_from_arrays(v, t)


@pytest.fixture(scope="session")
def courtyard_config():
    from macpp.cli import load_config

    return load_config(COURTYARD_INI)


@pytest.fixture(scope="session")
def courtyard_graph(courtyard_config):
    from macpp.cli import _build
    from macpp.geometry import load_mesh

    return _build(courtyard_config, load_mesh(courtyard_config.mesh), 1)


def exact_optimum(graph, K, delta_d):
    """Min-max optimum by Dijkstra over (node, covered set) states; no walk-length cap."""
    need = required_count(delta_d, graph.m)
    best = {}
    dist = {(0, 0): 0.0}
    heap = [(0.0, 0, 0)]
    while heap:
        d, v, c = heapq.heappop(heap)
        if d > dist[(v, c)]:
            continue
        best[c] = min(best.get(c, np.inf), d)
        for w, e in zip(graph.neighbors[v], graph.neighbor_edges[v]):
            s = (w, c | graph.edge_bits[e])
            nd = d + graph.edge_length[e]
            if nd < dist.get(s, np.inf):
                dist[s] = nd
                heapq.heappush(heap, (nd, *s))
    best[0] = 0.0
    sets = list(best.items())
    if K == 1:
        return min(d for c, d in sets if c.bit_count() >= need)
    return min(max(d1, d2) for c1, d1 in sets for c2, d2 in sets if (c1 | c2).bit_count() >= need)
