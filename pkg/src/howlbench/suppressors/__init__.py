"""Howling suppressors sharing the block-processing interface."""

from __future__ import annotations

from ..dsp import ConfigurationError
from .afc import AFCKalman, AFCNLMS, misalignment_db
from .base import Suppressor, process_signal
from .notch import Notch, NotchAHS, NotchBank, notch_sos, pole_radius, sos_response
from .simple import GainLimiter, Oracle, Passthrough, Zero

REGISTRY = {
    "passthrough": Passthrough,
    "zero": Zero,
    "gain_limiter": GainLimiter,
    "notch": NotchAHS,
    "afc_nlms": AFCNLMS,
    "afc_kalman": AFCKalman,
}


def make_suppressor(kind: str, **params) -> Suppressor:
    """Instantiate a registered suppressor by name."""
    try:
        cls = REGISTRY[kind]
    except KeyError:
        raise ConfigurationError(
            f"unknown suppressor {kind!r}; choose from {sorted(REGISTRY)}") from None
    return cls(**params)


__all__ = [
    "AFCKalman", "AFCNLMS", "GainLimiter", "Notch", "NotchAHS", "NotchBank", "Oracle",
    "Passthrough", "REGISTRY", "Suppressor", "Zero", "make_suppressor", "misalignment_db",
    "notch_sos", "pole_radius", "process_signal", "sos_response",
]
