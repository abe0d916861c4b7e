"""Diffusion-convolutional neural networks for node, graph and edge classification.

The most used entry points are re-exported here; the submodules hold the rest:
``graph`` (graphs and diffusion), ``model`` (parameters and activations),
``training``, ``baselines``, ``data`` and ``experiments``.
"""
from .data import DatasetBundle, load_citation_dir, load_tu_dataset, make_splits
from .experiments import ExperimentConfig, run_trials
from .graph import Graph, build_transition, diffuse
from .kernels import BACKEND
from .model import DcnnParams, dumps_params, loads_params
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DatasetBundle", "DcnnParams", "ExperimentConfig", "Graph", "TrainConfig",
    "build_transition", "diffuse", "dumps_params", "load_citation_dir", "load_tu_dataset",
    "loads_params", "make_splits", "run_trials", "train",
]
