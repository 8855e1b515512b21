"""Spectrally negative Levy processes with Parisian reflection below and a
dividend barrier above: scale functions, fluctuation identities and a Monte
Carlo oracle."""
from .identities import IDENTITIES, IdentityError, IdentityValue, Scenario, evaluate
from .levy_model import JumpComponent, JumpLaw, LevyModel, load_model, reference_models
from .scale import Backend, scale_context, w_scale

__version__ = "0.1.0"

__all__ = [
    "Backend",
    "IDENTITIES",
    "IdentityError",
    "IdentityValue",
    "JumpComponent",
    "JumpLaw",
    "LevyModel",
    "Scenario",
    "evaluate",
    "load_model",
    "reference_models",
    "scale_context",
    "w_scale",
]
