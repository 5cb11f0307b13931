"""Exception types shared across the package."""

from __future__ import annotations


class InvariantViolation(ValueError):
    """A constructor invariant failed; ``invariant`` names the check."""

    def __init__(self, invariant: str, detail: str):
        super().__init__(f"{invariant}: {detail}")
        self.invariant = invariant
        self.detail = detail


class UnregisteredObservation(KeyError):
    """Reset requested from an observation never issued at that layer."""


class EpisodeClosed(RuntimeError):
    """An action was submitted after the episode consumed its horizon."""


class EmptyDataset(ValueError):
    pass


class DatasetExhausted(RuntimeError):
    """A simulated environment ran out of dataset samples."""


class NoiselessViolation(ValueError):
    """Two samples share an observation but carry different labels."""


class RealizabilityViolation(ValueError):
    """A joint law does not factor through the decoder."""


class GenerationTimeout(RuntimeError):
    pass


class ConfigError(ValueError):
    """Invalid run configuration; ``fields`` maps dotted paths to messages."""

    def __init__(self, fields: dict[str, str]):
        lines = "; ".join(f"{k}: {v}" for k, v in sorted(fields.items()))
        super().__init__(f"invalid config ({lines})")
        self.fields = dict(fields)
