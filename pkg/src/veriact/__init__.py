"""veriact: verifier-guided action selection for embodied episodes.

Sample n candidate actions from a pluggable policy, collect m yes/no
verifications per candidate from a pluggable verifier, execute the argmax.
Ships with a symbolic household environment, oracle and noisy simulated
actors, a synthetic-failure data pipeline for verifier training data, and a
benchmark harness covering scaling, coverage, and latency accounting.
"""

from .selection import (
    CoverageEstimate,
    METHOD_GREEDY,
    METHOD_SELF_CONSISTENCY,
    METHOD_VEGAS,
    METHODS,
    ScoreBoard,
    SelectionAudit,
    SelectionError,
    analytic_coverage,
    estimate_coverage,
    select_greedy,
    select_self_consistency,
    select_vegas,
    wilson_interval,
)

__version__ = "0.1.0"

__all__ = [
    "CoverageEstimate",
    "METHOD_GREEDY",
    "METHOD_SELF_CONSISTENCY",
    "METHOD_VEGAS",
    "METHODS",
    "ScoreBoard",
    "SelectionAudit",
    "SelectionError",
    "__version__",
    "analytic_coverage",
    "estimate_coverage",
    "select_greedy",
    "select_self_consistency",
    "select_vegas",
    "wilson_interval",
]
