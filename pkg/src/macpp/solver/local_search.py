"""2-opt style segment reversal on decoded walks, written back into the keys."""

from __future__ import annotations

import numpy as np

from ..cprm import CPRM
from .decoder import DecodeTables, Solution, SolverParams, decode, encode_step, score_from


def _reencode(keys, agent, slots, new_nodes, steps, t: DecodeTables):
    out = list(keys)
    for s in steps:
        v, w = new_nodes[s], new_nodes[s + 1]
        nb = t.neighbors[v]
        out[slots[s]] = encode_step(agent, nb.index(w), len(nb))
    return out


def _prefix_states(keys, sol: Solution, t: DecodeTables):
    """Agent state (nodes, lengths, covered) just before each consumed key."""
    K = t.K
    cur, lengths, covered = [t.depot] * K, [0.0] * K, 0
    owner = {}
    for k in range(K):
        for step, slot in enumerate(sol.key_slots[k]):
            owner[slot] = (k, step)
    states = []
    for i in range(sol.consumed):
        states.append((tuple(cur), tuple(lengths), covered))
        k, step = owner[i]
        e = sol.routes[k].edges[step]
        cur[k] = sol.routes[k].nodes[step + 1]
        lengths[k] += t.edge_length[e]
        covered |= t.edge_bits[e]
    return states


def two_opt_improve(
    chromosome,
    sol: Solution | None,
    graph: CPRM,
    params: SolverParams,
    tables: DecodeTables | None = None,
) -> np.ndarray:
    """Reverse route segments while that strictly lowers fitness and keeps coverage.

    For every route and every position i on it, each later position j whose
    node is a roadmap neighbor of node i is a candidate: the walk becomes
    ``... v_i, v_j, v_{j-1}, ..., v_{i+1}`` and, when the edge
    ``(v_{i+1}, v_{j+1})`` exists, continues along the old tail. Without that
    edge the keys after the reversed segment are simply decoded again from
    ``v_{i+1}``. A swap is kept only when the re-decoded chromosome is
    feasible and has a strictly smaller fitness. Routes shorter than the
    current fitness are skipped.
    """
    t = tables or DecodeTables(graph, params)
    keys = np.asarray(chromosome, dtype=float).tolist()
    cur = sol if sol is not None and len(sol.key_slots) == t.K else decode(keys, t)
    edge_between = graph.edge_between
    elen = t.edge_length
    states = _prefix_states(keys, cur, t)

    for k in range(t.K):
        p = 0
        while True:
            nodes = cur.routes[k].nodes
            if p >= len(nodes) - 2:
                break
            if cur.feasible and cur.routes[k].length < cur.fitness:
                # shortening a route that is not the longest cannot lower the min-max
                break
            vi, vi1 = nodes[p], nodes[p + 1]
            accepted = False
            for q in range(p + 2, len(nodes)):
                vj = nodes[q]
                e_new1 = edge_between(vi, vj)
                if e_new1 is None:
                    continue
                new_nodes = nodes[: p + 1] + nodes[q:p:-1]
                last = q - 1  # last re-encoded step
                if q + 1 < len(nodes):
                    e_new2 = edge_between(vi1, nodes[q + 1])
                    if e_new2 is not None:
                        # interior edges are traversed in reverse, so only the two joins change
                        old = elen[edge_between(vi, vi1)] + elen[edge_between(vj, nodes[q + 1])]
                        if not elen[e_new1] + elen[e_new2] < old:
                            continue
                        new_nodes += nodes[q + 1 :]
                        last = q
                    # otherwise the keys after the reversed segment re-decode from v_{i+1}
                cand_keys = _reencode(keys, k, cur.key_slots[k], new_nodes, range(p, last + 1), t)
                s0 = cur.key_slots[k][p]
                fit, ok = score_from(cand_keys, t, s0, *states[s0])
                if ok and fit < cur.fitness:
                    keys, cur = cand_keys, decode(cand_keys, t)
                    states = _prefix_states(keys, cur, t)
                    accepted = True
                    break
            if not accepted:
                p += 1
    return np.array(keys)
