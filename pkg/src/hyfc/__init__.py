"""Hybrid forecasting of chaotic systems: reservoir computing coupled to an imperfect model."""

__version__ = "0.1.0"

from .dynamics import (  # noqa: E402
    DynamicalSystem,
    IntegrationBlowupError,
    KSParams,
    LorenzParams,
    Trajectory,
    estimate_lyapunov,
    generate_trajectory,
    get_system,
    ks_step,
    lorenz_step,
    lyapunov_exponent,
)
from .estimators import HybridForecaster, KnowledgeForecaster, ReservoirForecaster  # noqa: E402
from .evaluation import (  # noqa: E402
    EvalConfig,
    ForecastTask,
    TrialResult,
    TrialSummary,
    normalized_error,
    run_trials,
    summarize,
    valid_time,
)
from .hybrid import HybridConfig, predict_hybrid, train_hybrid  # noqa: E402
from .knowledge import KnowledgeModel, k_forecast, k_step  # noqa: E402
from .reservoir import (  # noqa: E402
    RankDeficiencyError,
    ReservoirConfig,
    SpectralRadiusError,
    build_adjacency,
    fit_readout,
    predict_closed_loop,
    spectral_radius,
    train_reservoir,
)

__all__ = [name for name in dir() if not name.startswith("_")]
