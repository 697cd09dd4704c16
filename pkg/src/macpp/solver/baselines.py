"""Reference planners: a greedy coverage-per-meter walker and an exhaustive oracle."""

from __future__ import annotations

import heapq

from ..cprm import CPRM, required_count
from ..visibility import CoverageBits
from .decoder import Route, Solution, SolverParams


class InfeasibleError(RuntimeError):
    pass


def _path_to_gain(graph: CPRM, start: int, covered: int) -> list[int] | None:
    """Shortest node path from ``start`` to the nearest node with a coverage-adding edge."""
    dist = {start: 0.0}
    prev = {}
    heap = [(0.0, start)]
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        if v != start and any(graph.edge_bits[e] & ~covered for e in graph.neighbor_edges[v]):
            path = [v]
            while path[-1] != start:
                path.append(prev[path[-1]])
            return path[::-1]
        for w, e in zip(graph.neighbors[v], graph.neighbor_edges[v]):
            nd = d + graph.edge_length[e]
            if nd < dist.get(w, float("inf")):
                dist[w] = nd
                prev[w] = v
                heapq.heappush(heap, (nd, w))
    return None


def greedy_baseline(graph: CPRM, params: SolverParams) -> Solution:
    """Shortest agent moves next, along its best new-coverage-per-meter edge.

    Ties go to the lower neighbor id. An agent with no coverage-adding edge
    at hand takes one step along the shortest path to the nearest node that
    has one.
    """
    K, m = params.K, graph.m
    need = required_count(params.delta_d, m)
    if need > graph.ceiling().count():
        raise InfeasibleError("roadmap cannot reach the required coverage")
    nodes = [[params.depot] for _ in range(K)]
    edges = [[] for _ in range(K)]
    lengths = [0.0] * K
    covered = 0
    while covered.bit_count() < need:
        a = min(range(K), key=lambda k: (lengths[k], k))
        v = nodes[a][-1]
        best, best_score = None, 0.0
        for w, e in zip(graph.neighbors[v], graph.neighbor_edges[v]):
            gain = (graph.edge_bits[e] & ~covered).bit_count()
            if gain == 0:
                continue
            score = gain / max(graph.edge_length[e], 1e-12)
            if score > best_score:
                best, best_score = (w, e), score
        if best is None:
            path = _path_to_gain(graph, v, covered)
            if path is None:
                raise InfeasibleError("no reachable edge adds coverage")
            w = path[1]
            best = (w, graph.edge_between(v, w))
        w, e = best
        nodes[a].append(w)
        edges[a].append(e)
        lengths[a] += graph.edge_length[e]
        covered |= graph.edge_bits[e]
    routes = [Route(k, nodes[k], edges[k], lengths[k]) for k in range(K)]
    return Solution(routes, CoverageBits(covered, m), max(lengths), True, sum(len(e) for e in edges))


ORACLE_MAX_NODES = 8
ORACLE_MAX_AGENTS = 2
ORACLE_MAX_EDGES = 6


def _walks(graph: CPRM, depot: int, max_edges: int, bound: float):
    """Every walk from depot of at most ``max_edges`` edges and length <= bound.

    Yields (length, covered bits, node list, edge list); only the shortest
    walk per distinct coverage set is kept.
    """
    best: dict[int, tuple] = {}

    def rec(v, length, covered, nodes, edges):
        prev = best.get(covered)
        if prev is None or length < prev[0]:
            best[covered] = (length, covered, list(nodes), list(edges))
        if len(edges) == max_edges:
            return
        for w, e in zip(graph.neighbors[v], graph.neighbor_edges[v]):
            nl = length + graph.edge_length[e]
            if nl > bound:
                continue
            nodes.append(w)
            edges.append(e)
            rec(w, nl, covered | graph.edge_bits[e], nodes, edges)
            nodes.pop()
            edges.pop()

    rec(depot, 0.0, 0, [depot], [])
    return sorted(best.values(), key=lambda w: (w[0], len(w[3]), w[2]))


def exhaustive_oracle(graph: CPRM, params: SolverParams, max_edges_per_route: int = ORACLE_MAX_EDGES) -> Solution:
    """Provably optimal min-max plan on tiny roadmaps.

    Enumerates every walk of up to ``max_edges_per_route`` edges from the
    depot, keeps the shortest per coverage set, then scans walks in
    increasing length as the longest route and pairs each with any
    no-longer walk (or the empty walk) whose union meets the target. The
    first hit is optimal.
    """
    if graph.n > ORACLE_MAX_NODES or params.K > ORACLE_MAX_AGENTS or max_edges_per_route > ORACLE_MAX_EDGES:
        raise ValueError(
            f"oracle limited to n <= {ORACLE_MAX_NODES}, K <= {ORACLE_MAX_AGENTS}, "
            f"max_edges_per_route <= {ORACLE_MAX_EDGES}"
        )
    K, m = params.K, graph.m
    need = required_count(params.delta_d, m)
    empty = (0.0, 0, [params.depot], [])

    def pack(chosen):
        routes = []
        covered = 0
        for k in range(K):
            length, bits, nodes, edges = chosen[k] if k < len(chosen) else empty
            routes.append(Route(k, list(nodes), list(edges), length))
            covered |= bits
        return Solution(routes, CoverageBits(covered, m), max(r.length for r in routes), True, 0)

    if need == 0:
        return pack([])
    walks = _walks(graph, params.depot, max_edges_per_route, float("inf"))
    for i, w in enumerate(walks):
        if w[1].bit_count() >= need:
            return pack([w])
        if K == 1:
            continue
        for j in range(i):
            o = walks[j]
            if (w[1] | o[1]).bit_count() >= need:
                return pack([w, o])
    raise InfeasibleError("no plan within the oracle's route-length bound reaches the coverage target")
