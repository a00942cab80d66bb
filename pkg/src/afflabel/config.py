"""Run configuration for the labeling pipeline."""

from dataclasses import dataclass


@dataclass(frozen=True)
class EmControls:
    """Shared EM stopping policy for base and ensemble fits."""

    tol: float = 1e-6        # relative log-likelihood change for convergence
    max_iter: int = 200
    restarts: int = 5

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1 or self.restarts < 1:
            raise ValueError(f"invalid EM controls: {self}")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a labeling run needs besides its input paths.

    ``z_top`` is the number of ranked prototypes kept per image per layer;
    each (layer, rank) pair contributes one affinity function.
    """

    n_classes: int
    z_top: int = 10
    em: EmControls = EmControls()
    var_floor: float = 1e-6       # diagonal-variance floor for base mixtures
    bernoulli_floor: float = 1e-4  # clip for ensemble Bernoulli parameters
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")
        if self.z_top < 1:
            raise ValueError(f"z_top must be >= 1, got {self.z_top}")
        if self.var_floor <= 0 or self.bernoulli_floor <= 0:
            raise ValueError("floors must be positive")
        if not (self.bernoulli_floor < 0.5):
            raise ValueError("bernoulli_floor must be < 0.5")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
