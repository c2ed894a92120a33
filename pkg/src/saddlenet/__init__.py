"""Distributed saddle-point dynamics for zero-sum games between two networks."""
from .graph_core import (
    WeightedDigraph,
    build_digraph,
    is_strongly_connected,
    is_weight_balanced,
    kron_lift,
    lambda_star_min,
    spectral_summary,
)
from .game_model import Box, EngagementGraph, ExtendedPayoff, TwoNetworkGame
from .dynamics import (
    IntegratorSettings,
    StackedState,
    field_directed,
    field_undirected,
    integrate,
)
from .param_design import DesignInputs, design, find_beta_star, h
from .scenarios import (
    ChannelScenario,
    QuadraticGame,
    build_channel_game,
    build_quadratic_game,
    example1_reference,
)

__version__ = "0.1.0"
