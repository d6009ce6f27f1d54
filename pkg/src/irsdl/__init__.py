"""Learning IRS phase configurations and downlink beams from uplink pilots.

The subpackages cover the geometric channel model (:mod:`irsdl.channel`),
the DFT pilot schedule (:mod:`irsdl.pilots`), least-squares estimation and
the alternating phase/beam optimizer (:mod:`irsdl.estimation`), a numpy
multilayer perceptron (:mod:`irsdl.nn`) and the dataset and evaluation
drivers (:mod:`irsdl.experiments`). ``python -m irsdl`` runs the CLI.
"""
from .config import Profile, SystemConfig, load_profile
from .errors import ConfigError, DimensionError, IrsError, NumericalError, SingularObservationError

__version__ = "0.1.0"

__all__ = ["Profile", "SystemConfig", "load_profile", "ConfigError", "DimensionError", "IrsError",
           "NumericalError", "SingularObservationError", "__version__"]
