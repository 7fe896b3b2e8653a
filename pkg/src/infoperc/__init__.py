"""Information-percolation tools for Glauber dynamics of the Ising model."""

from .dynamics import UpdateField, UpdateSequence, evolve, grand_coupling_evolve, sample_updates, update_prob
from .fourier_rule import RuleTable, build_rule_table
from .graphs import Graph, generate_graph

__all__ = [
    "Graph",
    "RuleTable",
    "UpdateField",
    "UpdateSequence",
    "build_rule_table",
    "evolve",
    "generate_graph",
    "grand_coupling_evolve",
    "sample_updates",
    "update_prob",
]
