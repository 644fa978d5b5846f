"""absteer: a closed-loop operator-selection learning engine for steering
description abstraction levels, with a simulated-user bootstrap."""

__version__ = "0.1.0"

from .autouser import AutouserConfig
from .engine import Engine, EngineConfig, run_bootstrap
from .learning import Feedback
from .selectors import SelectorConfig
from .surrogate import EnvConfig, StateParams

__all__ = [
    "AutouserConfig",
    "Engine",
    "EngineConfig",
    "EnvConfig",
    "Feedback",
    "SelectorConfig",
    "StateParams",
    "run_bootstrap",
]
