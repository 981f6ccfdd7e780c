"""Quantized interaction-network inference, geometric graph partitioning and a
dataflow performance model for edge-classifying track-finding accelerators."""
from .alloc import (Allocation, Workload, allocate_data_aware, allocate_mpa, allocate_uniform,
                    estimate_resources)
from .dfsim import (CostModel, SimReport, calibrate, check_requirement, min_fifo_depths,
                    simulate, sweep_pes)
from .errors import (DeadlockError, DomainError, ParseError, StructuralError, TrackGNNError,
                     ValidationError)
from .fileio import load_graph, load_weights, save_graph, save_weights
from .fxp import Fx, fx_add, fx_hard_sigmoid, fx_mul, fx_relu, quantize
from .geom import HitGraph, LayerId, partition, reassemble, validate
from .inet import InferConfig, ModelParams, infer, infer_partitioned, random_params
from .kernels import BACKEND
from .synthetic import generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "Allocation", "BACKEND", "CostModel", "DeadlockError", "DomainError", "Fx", "HitGraph",
    "InferConfig", "LayerId", "ModelParams", "ParseError", "SimReport", "StructuralError",
    "TrackGNNError", "ValidationError", "Workload", "allocate_data_aware", "allocate_mpa",
    "allocate_uniform", "calibrate", "check_requirement", "estimate_resources", "fx_add",
    "fx_hard_sigmoid", "fx_mul", "fx_relu", "generate_synthetic", "infer", "infer_partitioned",
    "load_graph", "load_weights", "min_fifo_depths", "partition", "quantize", "random_params",
    "reassemble", "save_graph", "save_weights", "simulate", "sweep_pes", "validate",
]
