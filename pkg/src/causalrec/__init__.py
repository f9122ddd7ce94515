"""Causal structure learning from recommender-system feedback trajectories."""
from .core import (CausalGraph, DataError, Trajectory, TrajectoryDataset, VariableSpace,
                   is_dag, threshold_graph, transitions)

__version__ = "0.1.0"

__all__ = ["CausalGraph", "DataError", "Trajectory", "TrajectoryDataset", "VariableSpace",
           "is_dag", "threshold_graph", "transitions"]
