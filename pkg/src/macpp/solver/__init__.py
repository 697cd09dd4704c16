"""Min-max set-covering routing on a coverage roadmap."""

from .baselines import InfeasibleError, exhaustive_oracle, greedy_baseline
from .brkga import BRKGAResult, run_brkga
from .decoder import (
    DecodeTables,
    Route,
    Solution,
    SolverParams,
    decode,
    decode_key,
    encode_step,
    evaluate_fitness,
    is_connected_walk,
)
from .local_search import two_opt_improve

__all__ = [
    "BRKGAResult",
    "DecodeTables",
    "InfeasibleError",
    "Route",
    "Solution",
    "SolverParams",
    "decode",
    "decode_key",
    "encode_step",
    "evaluate_fitness",
    "exhaustive_oracle",
    "greedy_baseline",
    "is_connected_walk",
    "run_brkga",
    "two_opt_improve",
]
