"""Biased random-key genetic algorithm over the roadmap decoder.

Random draws come from one ``numpy.random.Generator`` in a fixed order:

1. initial population, ``P x L`` uniforms;
2. per generation: mutants (``n_mutants x L``), elite parent indices,
   non-elite parent indices, the per-key inheritance mask, then (only with
   local improvement enabled) one coin per new individual.

Fitness evaluation and local improvement are deterministic, so handing them
to a pool of workers does not change any result.
"""

from __future__ import annotations

import logging
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np

from ..cprm import CPRM
from .decoder import DecodeTables, Solution, SolverParams, decode
from .local_search import two_opt_improve

log = logging.getLogger(__name__)


@dataclass
class BRKGAResult:
    best: Solution
    best_keys: np.ndarray
    history: list[float]  # best fitness, entry 0 = initial population
    mean_history: list[float] = field(default_factory=list)
    feasible_history: list[int] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.best.feasible


# worker-side state for process pools
_WORKER_TABLES: DecodeTables | None = None


def _init_worker(tables: DecodeTables) -> None:
    global _WORKER_TABLES
    _WORKER_TABLES = tables


def _score_chunk(chunk):
    return [decode(row, _WORKER_TABLES, want_solution=False) for row in chunk]


def _improve_chunk(args):
    graph, params, rows = args
    return _improve_rows(rows, graph, params, _WORKER_TABLES or DecodeTables(graph, params))


def evaluate_population(pop: np.ndarray, tables: DecodeTables, executor: Executor | None = None, workers: int = 1):
    """(fitness, feasible) arrays for every row of ``pop``."""
    rows = pop.tolist()
    if executor is None or workers <= 1:
        scored = [decode(r, tables, want_solution=False) for r in rows]
    else:
        size = max(1, -(-len(rows) // workers))
        chunks = [rows[i : i + size] for i in range(0, len(rows), size)]
        scored = [s for part in executor.map(_score_chunk, chunks) for s in part]
    fit = np.array([s[0] for s in scored])
    feas = np.array([s[1] for s in scored], dtype=bool)
    return fit, feas


def run_brkga(
    graph: CPRM,
    params: SolverParams,
    use_local_improvement: bool = True,
    rng: np.random.Generator | None = None,
    executor: Executor | None = None,
    workers: int = 1,
) -> BRKGAResult:
    """Evolve random-key chromosomes; return the best solution and its history.

    When a process pool is passed as ``executor`` it must have been created
    with ``initializer=_init_worker, initargs=(DecodeTables(graph, params),)``.
    """
    if rng is None:
        rng = np.random.default_rng(params.rng_seed)
    t = DecodeTables(graph, params)
    K, L, P = params.K, t.L, params.population_size
    n_elite = max(1, int(round(params.elite_fraction * P)))
    n_mut = int(round(params.mutant_fraction * P))
    n_child = P - n_elite - n_mut
    if n_child < 0:
        raise ValueError("population too small for the elite and mutant fractions")

    pop = rng.random((P, L)) * K
    fit, feas = evaluate_population(pop, t, executor, workers)
    history = [float(fit.min())]
    means = [float(fit.mean())]
    feas_counts = [int(feas.sum())]

    for gen in range(params.generations):
        order = np.argsort(fit, kind="stable")
        elite, rest = pop[order[:n_elite]], pop[order[n_elite:]]
        elite_fit, elite_feas = fit[order[:n_elite]], feas[order[:n_elite]]

        mutants = rng.random((n_mut, L)) * K
        ea = rng.integers(n_elite, size=n_child)
        na = rng.integers(len(rest), size=n_child) if len(rest) else np.zeros(n_child, dtype=int)
        inherit = rng.random((n_child, L)) < params.elite_inherit_prob
        pool = rest if len(rest) else elite
        children = np.where(inherit, elite[ea], pool[na])
        new = np.vstack([mutants, children])
        new_fit, new_feas = evaluate_population(new, t, executor, workers)

        if use_local_improvement and params.local_improve_prob > 0:
            coins = rng.random(len(new)) < params.local_improve_prob
            idx = np.flatnonzero(coins)
            if idx.size:
                rows = [new[i] for i in idx]
                if executor is None or workers <= 1:
                    improved = _improve_rows(rows, graph, params, t)
                else:
                    size = max(1, -(-len(rows) // workers))
                    parts = [(graph, params, rows[i : i + size]) for i in range(0, len(rows), size)]
                    improved = [r for part in executor.map(_improve_chunk, parts) for r in part]
                for i, (keys, (f, ok)) in zip(idx, improved):
                    new[i] = keys
                    new_fit[i], new_feas[i] = f, ok

        pop = np.vstack([elite, new])
        fit = np.concatenate([elite_fit, new_fit])
        feas = np.concatenate([elite_feas, new_feas])
        history.append(float(fit.min()))
        means.append(float(fit.mean()))
        feas_counts.append(int(feas.sum()))
        log.debug("generation %d: best %.3f mean %.3f feasible %d", gen + 1, history[-1], means[-1], feas_counts[-1])

    best_i = int(np.argsort(fit, kind="stable")[0])
    best_keys = pop[best_i].copy()
    best = decode(best_keys.tolist(), t)
    return BRKGAResult(best, best_keys, history, means, feas_counts)


def _improve_rows(rows, graph, params, t):
    out = []
    for row in rows:
        keys = two_opt_improve(row, None, graph, params, t)
        out.append((keys, decode(keys.tolist(), t, want_solution=False)))
    return out
