"""Safe adaptive predictor-feedback control of strict-feedback plants
driven through a nonlinear actuator chain and an unknown constant input
delay, with an online least-squares delay identifier and a safety filter
that keeps tracking margins nonnegative while the delay estimate settles.

The package is organized bottom-up:

    jets          truncated Taylor-series arithmetic (total time derivatives)
    plant         chain definitions and series expansion along the flow
    trajectory    analytic reference signals as jets
    delayline     sampled boundary-signal history (the transport channel)
    predictor     batched fixed-horizon state predictors over a delay grid
    backstepping  margin transforms, nominal command, gain selection
    identifier    batch least-squares delay estimation with event triggers
    safetyfilter  pointwise-min/max safe command over the candidate set
    scenario      plain-text scenario files and assumption checks
    engine        single-vehicle closed-loop simulation
    platoon       two-vehicle chain scenario from the benchmark
    oracles       inverse transforms and independent diagnostics
    report        delimited output, figures, summaries
    cli           command line entry point
"""

from .backstepping import GainSet, GainSelectionError, select_gains, validate_gains
from .jets import Jet, JetOrderError, constant, variable
from .plant import PlantDefinition
from .trajectory import AnalyticTrajectory, ZeroTrajectory

__version__ = "0.1.0"

__all__ = [
    "Jet",
    "JetOrderError",
    "constant",
    "variable",
    "PlantDefinition",
    "AnalyticTrajectory",
    "ZeroTrajectory",
    "GainSet",
    "GainSelectionError",
    "select_gains",
    "validate_gains",
    "__version__",
]
