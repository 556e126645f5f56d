__version__ = "0.1"

from .errors import (
    TspqError,
    InvalidInstanceError,
    MalformedTourError,
    EncodingError,
    InfeasibleConfigError,
    ConfigError,
    ReportError,
)
from .instance import (
    City,
    DistanceMatrix,
    Tour,
    TspInstance,
    EUROPEAN_CITIES,
    build_distance_matrix,
    haversine_km,
    load_city_pool,
    nearest_neighbor_tour,
    select_subinstance,
    tour_cost,
)
from .classical import brute_force_optimal, enumerate_tours, search_reference_subsets
from .qubo import (
    IsingModel,
    QuboModel,
    InvalidAssignment,
    decode_bitstring,
    encode_tsp_qubo,
    ising_energy,
    qubo_energy,
    qubo_to_ising,
)
from .qsim import (
    Circuit,
    Gate,
    NoiseModel,
    QaoaParams,
    SampleCounts,
    Statevector,
    apply_gate_noise,
    build_compact_cost_circuit,
    build_qaoa_circuit,
    circuit_metrics,
    expected_energy,
    sample,
    simulate,
)
from .ml import (
    ClusterModel,
    ForestConfig,
    ForestModel,
    TrainingSet,
    featurize,
    forest_fit,
    forest_predict,
    kfold_cv,
    kmeans,
)
from .statistics import GroupedStatistics
from .metrics import (
    MethodStats,
    aggregate,
    approximation_ratio,
    emit_report,
    improvement_pct,
    relative_excess_pct,
)
from .config import SolveConfig, load_config
from .hybrid import (
    ParameterArchive,
    RunRecord,
    ml_rerank,
    optimize_parameters,
    solve,
    solve_classical,
    solve_hybrid,
    solve_quantum,
    stitch_clusters,
)

__all__ = [
    "TspqError",
    "InvalidInstanceError",
    "MalformedTourError",
    "EncodingError",
    "InfeasibleConfigError",
    "ConfigError",
    "ReportError",
    "City",
    "DistanceMatrix",
    "Tour",
    "TspInstance",
    "EUROPEAN_CITIES",
    "build_distance_matrix",
    "haversine_km",
    "load_city_pool",
    "nearest_neighbor_tour",
    "select_subinstance",
    "tour_cost",
    "brute_force_optimal",
    "enumerate_tours",
    "search_reference_subsets",
    "IsingModel",
    "QuboModel",
    "InvalidAssignment",
    "decode_bitstring",
    "encode_tsp_qubo",
    "ising_energy",
    "qubo_energy",
    "qubo_to_ising",
    "Circuit",
    "Gate",
    "NoiseModel",
    "QaoaParams",
    "SampleCounts",
    "Statevector",
    "apply_gate_noise",
    "build_compact_cost_circuit",
    "build_qaoa_circuit",
    "circuit_metrics",
    "expected_energy",
    "sample",
    "simulate",
    "ClusterModel",
    "ForestConfig",
    "ForestModel",
    "TrainingSet",
    "featurize",
    "forest_fit",
    "forest_predict",
    "kfold_cv",
    "kmeans",
    "GroupedStatistics",
    "MethodStats",
    "aggregate",
    "approximation_ratio",
    "emit_report",
    "improvement_pct",
    "relative_excess_pct",
    "SolveConfig",
    "load_config",
    "ParameterArchive",
    "RunRecord",
    "ml_rerank",
    "optimize_parameters",
    "solve",
    "solve_classical",
    "solve_hybrid",
    "solve_quantum",
    "stitch_clusters",
]
