"""Popularity ranking dynamics with heterogeneous user types.

Thin wrapper over the compiled ``_poprank`` extension.
"""

from ._poprank import (
    ExperimentService,
    Ranking,
    choice_by_rank,
    enumerate_stable_patterns,
    expected_choice_by_rank,
    fit,
    ingest_event_log,
    is_stable_limit,
    limit_table,
    log_likelihood,
    max_p_for_uniqueness,
    run,
    simulate_table,
    sweep,
    synthesize_clicks,
    update_ranking,
)

__version__ = "0.1.0"

__all__ = [
    "ExperimentService",
    "Ranking",
    "choice_by_rank",
    "enumerate_stable_patterns",
    "expected_choice_by_rank",
    "fit",
    "ingest_event_log",
    "is_stable_limit",
    "limit_table",
    "log_likelihood",
    "max_p_for_uniqueness",
    "run",
    "simulate_table",
    "sweep",
    "synthesize_clicks",
    "update_ranking",
]
