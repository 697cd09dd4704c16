"""Solution and convergence-history files.

Solution files are line-oriented text (``macpp-solution 1``). Besides node
and edge ids, each traversed edge is written out as a *leg*: the flown
polyline plus the view directions at both ends. That makes a solution file
self-contained for replay against the mesh, without the roadmap.

Floats are written with ``repr`` so reading a file back is bit-exact, and
nothing time-dependent is recorded, so identical runs give identical bytes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..cprm import CPRM
from .decoder import Solution

FORMAT_VERSION = 1


@dataclass
class Leg:
    edge: int
    start: int
    end: int
    start_dir: np.ndarray
    end_dir: np.ndarray
    polyline: np.ndarray


@dataclass
class AgentRecord:
    agent: int
    nodes: list[int]
    edges: list[int]
    length: float
    legs: list[Leg] = field(default_factory=list)


@dataclass
class SolutionFile:
    agents: list[AgentRecord]
    fitness: float
    coverage: float
    feasible: bool
    seed: int
    params: dict[str, str]  # flat "section.key" -> value echo


def _f(x) -> str:
    return repr(float(x))


def _vec(a) -> str:
    return " ".join(_f(x) for x in np.asarray(a, dtype=float).ravel())


def solution_record(sol: Solution, graph: CPRM, seed: int, params: dict[str, str]) -> SolutionFile:
    agents = []
    for r in sol.routes:
        legs = []
        for a, b, e in zip(r.nodes, r.nodes[1:], r.edges):
            legs.append(
                Leg(e, a, b, graph.nodes[a].orientation, graph.nodes[b].orientation, graph.edges[e].oriented(a))
            )
        agents.append(AgentRecord(r.agent, list(r.nodes), list(r.edges), r.length, legs))
    return SolutionFile(agents, sol.fitness, sol.coverage_ratio, sol.feasible, seed, dict(params))


def write_solution(rec: SolutionFile, path) -> None:
    lines = [f"macpp-solution {FORMAT_VERSION}"]
    lines.append(f"seed {rec.seed}")
    lines.append(f"fitness {_f(rec.fitness)}")
    lines.append(f"coverage {_f(rec.coverage)}")
    lines.append(f"feasible {int(rec.feasible)}")
    for key in sorted(rec.params):
        lines.append(f"param {key} {rec.params[key]}")
    lines.append(f"agents {len(rec.agents)}")
    for a in rec.agents:
        lines.append(f"agent {a.agent} {_f(a.length)}")
        lines.append("nodes " + " ".join(map(str, a.nodes)))
        lines.append("edges " + " ".join(map(str, a.edges)))
        for leg in a.legs:
            lines.append(
                f"leg {leg.edge} {leg.start} {leg.end} {_vec(leg.start_dir)} {_vec(leg.end_dir)} "
                f"{len(leg.polyline)} {_vec(leg.polyline)}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_solution(path) -> SolutionFile:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].split() != ["macpp-solution", str(FORMAT_VERSION)]:
        raise ValueError(f"{path}: not a macpp-solution v{FORMAT_VERSION} file")
    head: dict[str, str] = {}
    params: dict[str, str] = {}
    agents: list[AgentRecord] = []
    try:
        for ln in lines[1:]:
            t = ln.split()
            if not t:
                continue
            tag = t[0]
            if tag == "param":
                params[t[1]] = " ".join(t[2:])
            elif tag == "agent":
                agents.append(AgentRecord(int(t[1]), [], [], float(t[2])))
            elif tag == "nodes":
                agents[-1].nodes = [int(x) for x in t[1:]]
            elif tag == "edges":
                agents[-1].edges = [int(x) for x in t[1:]]
            elif tag == "leg":
                v = [float(x) for x in t[4:10]]
                npts = int(t[10])
                pts = np.array([float(x) for x in t[11:]]).reshape(npts, 3)
                agents[-1].legs.append(Leg(int(t[1]), int(t[2]), int(t[3]), np.array(v[:3]), np.array(v[3:]), pts))
            else:
                head[tag] = t[1] if len(t) > 1 else ""
        return SolutionFile(
            agents,
            float(head["fitness"]),
            float(head["coverage"]),
            bool(int(head["feasible"])),
            int(head["seed"]),
            params,
        )
    except (KeyError, ValueError, IndexError) as exc:
        raise ValueError(f"{path}: corrupt solution file: {exc}") from exc


CONVERGENCE_HEADER = ["generation", "best_fitness", "mean_fitness", "feasible_count"]


def write_convergence(result, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONVERGENCE_HEADER)
        for g, (b, mn, fc) in enumerate(zip(result.history, result.mean_history, result.feasible_history)):
            w.writerow([g, _f(b), _f(mn), fc])
