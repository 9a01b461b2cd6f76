"""Quantum reservoir computing for multivariate time-series forecasting."""

from .circuits import (
    FC_TFI,
    NN_TFI,
    OPT_NN_TFI,
    VARIANTS,
    Circuit,
    CircuitStats,
    Gate,
    HamiltonianSpec,
    QubitLayout,
    build_encoding,
    build_hamiltonian,
    build_layout,
    build_trotter_step,
    build_window_circuit,
    decompose_rxx,
    depth_and_counts,
    encoding_angle,
    sample_couplings,
)
from .diagnostics import (
    SvdDelta,
    SvdReport,
    compare_reports,
    effective_rank,
    explained_variance_ratio,
    standardize,
    svd_report,
    svd_spectrum,
)
from .dynamics import (
    EnsoParams,
    IntegrationError,
    LorenzParams,
    RawSeries,
    TimeSeriesDataset,
    UnitScaler,
    enso_deriv,
    generate_series,
    lorenz_deriv,
    rk4_step,
    split_series,
)
from .pipeline import (
    FeatureMatrix,
    QuantumReservoir,
    ReservoirConfig,
    ReservoirForecaster,
    align_supervised,
    extract_features,
)
from .readout import (
    EchoStateNetwork,
    ForecastMetrics,
    RidgeModel,
    SingularSystemError,
    baseline_copy,
    esn_update,
    fit_ridge,
    mse_metrics,
    rescale_spectral,
    ridge_predict,
    spectral_radius,
)
from .simulator import (
    NoiseModel,
    ShotEstimate,
    SimulationSizeError,
    all_z,
    all_z_factor,
    apply_depolarizing,
    apply_gate,
    expect_z,
    factor_to_dm,
    init_plus,
    purity,
    reset_qubits,
    run_circuit_dm,
    run_circuit_factored,
    run_circuit_trajectory,
    sample_shots,
    window_all_z_factored,
)

__version__ = "0.1.0"
