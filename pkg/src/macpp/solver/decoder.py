"""Random-key decoding of chromosomes into per-agent walks on the roadmap."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..cprm import CPRM, required_count
from ..visibility import CoverageBits


@dataclass(frozen=True)
class SolverParams:
    K: int = 1
    delta_d: float = 0.98
    population_size: int = 1000
    generations: int = 100
    elite_fraction: float = 0.1
    mutant_fraction: float = 0.2
    elite_inherit_prob: float = 0.5
    local_improve_prob: float = 0.2
    chromosome_length_factor: float = 1.0
    depot: int = 0
    infeasibility_penalty_weight: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not 0 <= self.delta_d <= 1:
            raise ValueError("delta_d must lie in [0, 1]")
        for name in ("elite_fraction", "mutant_fraction", "elite_inherit_prob"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not 0 <= self.local_improve_prob <= 1:
            raise ValueError("local_improve_prob must lie in [0, 1]")
        if self.elite_fraction + self.mutant_fraction >= 1:
            raise ValueError("elite_fraction + mutant_fraction must be below 1")
        if self.population_size < 2 or self.generations < 0:
            raise ValueError("population_size must be >= 2 and generations >= 0")
        if not self.chromosome_length_factor > 0:
            raise ValueError("chromosome_length_factor must be positive")
        if self.infeasibility_penalty_weight < 0:
            raise ValueError("infeasibility_penalty_weight must be non-negative")

    def chromosome_length(self, n: int) -> int:
        return max(1, int(round(self.chromosome_length_factor * n)))


@dataclass
class Route:
    agent: int
    nodes: list[int]
    edges: list[int]
    length: float = 0.0


@dataclass
class Solution:
    routes: list[Route]
    coverage: CoverageBits
    fitness: float
    feasible: bool
    consumed: int = 0  # number of keys read before the coverage target was met
    key_slots: list[list[int]] = field(default_factory=list, repr=False)

    @property
    def max_length(self) -> float:
        return max((r.length for r in self.routes), default=0.0)

    @property
    def coverage_ratio(self) -> float:
        return self.coverage.count() / self.coverage.m


class DecodeTables:
    """Flat, picklable view of a roadmap used in the decoding hot loop."""

    def __init__(self, graph: CPRM, params: SolverParams):
        if not 0 <= params.depot < graph.n:
            raise ValueError(f"depot {params.depot} is not a node of the roadmap")
        self.neighbors = [list(nb) for nb in graph.neighbors]
        self.neighbor_edges = [list(ne) for ne in graph.neighbor_edges]
        self.edge_bits = list(graph.edge_bits)
        self.edge_length = list(graph.edge_length)
        self.m = graph.m
        self.n = graph.n
        self.K = params.K
        self.depot = params.depot
        self.delta_d = params.delta_d
        self.need = required_count(params.delta_d, graph.m)
        self.L = params.chromosome_length(graph.n)
        self.weight = params.infeasibility_penalty_weight
        self.total_length = float(sum(self.edge_length))
        # any feasible decode reads at most L keys, so this bounds every feasible fitness
        self.offset = self.L * max(self.edge_length, default=0.0)


def decode_key(key: float, agent_nodes, graph: CPRM) -> tuple[int, int, int]:
    """Map one key to (agent, edge id, next node) and advance that agent in place."""
    K = len(agent_nodes)
    agent = min(int(key), K - 1)
    v = agent_nodes[agent]
    nb = graph.neighbors[v]
    deg = len(nb)
    if deg == 0:
        raise ValueError(f"node {v} has no neighbors")
    j = min(int((key - agent) * deg), deg - 1)
    agent_nodes[agent] = nb[j]
    return agent, graph.neighbor_edges[v][j], nb[j]


def encode_step(agent: int, rank: int, deg: int) -> float:
    """Key that makes ``agent`` take its ``rank``-th neighbor (mid-interval)."""
    return agent + (rank + 0.5) / deg


def score_from(keys, t: DecodeTables, start: int, cur, lengths, covered: int):
    """Fitness-only decode resuming at key ``start`` from a saved agent state."""
    K = t.K
    nbrs, nedges, bits, elen = t.neighbors, t.neighbor_edges, t.edge_bits, t.edge_length
    cur = list(cur)
    lengths = list(lengths)
    need = t.need
    done = covered.bit_count() >= need
    if not done:
        for i in range(start, len(keys)):
            x = keys[i]
            a = int(x)
            if a >= K:
                a = K - 1
            v = cur[a]
            nb = nbrs[v]
            deg = len(nb)
            j = int((x - a) * deg)
            if j >= deg:
                j = deg - 1
            e = nedges[v][j]
            cur[a] = nb[j]
            lengths[a] += elen[e]
            covered |= bits[e]
            if covered.bit_count() >= need:
                done = True
                break
    fitness = max(lengths)
    if not done:
        fitness += t.offset + t.weight * (t.delta_d - covered.bit_count() / t.m) * t.total_length
    return fitness, done


def decode(keys, t: DecodeTables, want_solution: bool = True):
    """Decode a chromosome.

    Returns ``(fitness, feasible)`` when ``want_solution`` is false, else a
    :class:`Solution`. Agents all start at the depot; keys are read left to
    right and reading stops as soon as coverage reaches ``delta_d``.
    """
    K = t.K
    if not want_solution:
        return score_from(keys, t, 0, [t.depot] * K, [0.0] * K, 0)
    nbrs, nedges, bits, elen = t.neighbors, t.neighbor_edges, t.edge_bits, t.edge_length
    cur = [t.depot] * K
    lengths = [0.0] * K
    covered = 0
    need = t.need
    consumed = 0
    nodes = [[t.depot] for _ in range(K)]
    edges = [[] for _ in range(K)]
    slots = [[] for _ in range(K)]
    done = need <= 0
    if not done:
        for i, x in enumerate(keys):
            a = int(x)
            if a >= K:
                a = K - 1
            v = cur[a]
            nb = nbrs[v]
            deg = len(nb)
            j = int((x - a) * deg)
            if j >= deg:
                j = deg - 1
            e = nedges[v][j]
            w = nb[j]
            cur[a] = w
            lengths[a] += elen[e]
            covered |= bits[e]
            consumed = i + 1
            nodes[a].append(w)
            edges[a].append(e)
            slots[a].append(i)
            if covered.bit_count() >= need:
                done = True
                break
    fitness = max(lengths)
    if not done:
        achieved = covered.bit_count() / t.m
        fitness += t.offset + t.weight * (t.delta_d - achieved) * t.total_length
    routes = [Route(k, nodes[k], edges[k], lengths[k]) for k in range(K)]
    return Solution(routes, CoverageBits(covered, t.m), fitness, done, consumed, slots)


def evaluate_fitness(chromosome, graph: CPRM, params: SolverParams, tables: DecodeTables | None = None):
    """Decode and score a chromosome: ``(fitness, Solution)``."""
    keys = np.asarray(chromosome, dtype=float)
    if keys.size and (keys.min() < 0 or keys.max() >= params.K):
        raise ValueError(f"keys must lie in [0, {params.K})")
    t = tables or DecodeTables(graph, params)
    sol = decode(keys.tolist(), t)
    return sol.fitness, sol


def route_length(nodes, t: DecodeTables, graph: CPRM) -> float:
    total = 0.0
    for a, b in zip(nodes, nodes[1:]):
        total += t.edge_length[graph.edge_between(a, b)]
    return total


def is_connected_walk(route: Route, graph: CPRM) -> bool:
    if len(route.edges) != len(route.nodes) - 1:
        return False
    for (a, b), e in zip(zip(route.nodes, route.nodes[1:]), route.edges):
        if graph.edge_between(a, b) != e:
            return False
    return True


def solution_length_check(sol: Solution, graph: CPRM) -> bool:
    """Fitness of a feasible solution equals its longest route, recomputed."""
    lens = [math.fsum(graph.edge_length[e] for e in r.edges) for r in sol.routes]
    return abs(max(lens, default=0.0) - sol.max_length) <= 1e-9
