"""Monte Carlo engine for Brownian motion killed on a multicone boundary."""

from .engine import (
    EstimateCI,
    PathEnsemble,
    SimConfig,
    bridge_crossing_prob,
    default_workers,
    estimate_kernel_at,
    estimate_survival,
    estimate_u,
    estimate_w,
    hitting_probability,
    hitting_time_density,
    simulate_exits,
    simulate_horizons,
    simulate_paths,
)

__all__ = [
    "EstimateCI",
    "PathEnsemble",
    "SimConfig",
    "bridge_crossing_prob",
    "default_workers",
    "estimate_kernel_at",
    "estimate_survival",
    "estimate_u",
    "estimate_w",
    "hitting_probability",
    "hitting_time_density",
    "simulate_exits",
    "simulate_horizons",
    "simulate_paths",
]
