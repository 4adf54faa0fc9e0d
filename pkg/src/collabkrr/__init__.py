"""Collaborative kernel least-squares regression by successive projections."""
from .connectivity import AuxiliaryGraph, SpanWitness, is_connected, span_witness, spans_equal
from .ensemble import (
    Ensemble,
    MessageBoard,
    SyntheticTarget,
    TrainingSet,
    generate_data,
    init_board,
    load_dataset,
    make_centralized,
    make_geometric,
    make_public_private,
    make_random_overlapping,
    save_dataset,
)
from .errors import InputError, NumericalError, StoreError
from .kernels import (
    GramMatrix,
    Kernel,
    KernelExpansion,
    eval_expansion,
    eval_kernel,
    gram,
    numerical_rank,
    rkhs_norm_sq,
)
from .local import LocalSystem, LocalUpdateResult, apply_update, local_update
from .oracle import RelaxedSolution, solve_centralized, solve_relaxed, verify_against_trainer
from .trainer import ProductPoint, Schedule, TrainConfig, TrainState, conflict_coloring, product_distance_sq, train

__version__ = "0.1.0"
