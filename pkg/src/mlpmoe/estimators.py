"""Estimator wrappers so checkpoint surgery composes in a Pipeline.

Each transformer takes a Checkpoint as X and returns a new Checkpoint;
the underlying operations live in surgery. Parameters are stored
verbatim in __init__ per estimator convention, and validated at fit
time.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin

from .checkpoint import Checkpoint, validate_checkpoint
from .errors import ArgumentError
from .surgery import convert_checkpoint, fade_checkpoint, prune_checkpoint


def check_checkpoint(X) -> Checkpoint:
    """Validate that X is a structurally sound Checkpoint and return it."""
    if not isinstance(X, Checkpoint):
        raise ArgumentError(f"expected a Checkpoint, got {type(X).__name__}")
    validate_checkpoint(X)
    return X


class DenseToMoe(BaseEstimator, TransformerMixin):
    """Split every dense MLP into ``branches`` summing branch MLPs."""

    def __init__(self, branches: int = 16):
        self.branches = branches

    def fit(self, X, y=None):
        ckpt = check_checkpoint(X)
        if self.branches < 1:
            raise ArgumentError(f"branches must be >= 1, got {self.branches}")
        self.n_layers_ = ckpt.meta.num_layers
        return self

    def transform(self, X) -> Checkpoint:
        return convert_checkpoint(check_checkpoint(X), self.branches)


class FractalFade(BaseEstimator, TransformerMixin):
    """Magnitude-sparsify branches on a ramp, steeper for later branches.

    Branch 0 and all down projections are left untouched. Per-layer
    kept counts from the most recent transform land in ``kept_counts_``.
    """

    def __init__(self, max_ratio: float = 0.9):
        self.max_ratio = max_ratio

    def fit(self, X, y=None):
        check_checkpoint(X)
        if not 0.0 <= self.max_ratio < 1.0:
            raise ArgumentError(f"max_ratio must be in [0, 1), got {self.max_ratio}")
        self.fitted_ = True
        return self

    def transform(self, X) -> Checkpoint:
        out, counts = fade_checkpoint(check_checkpoint(X), max_ratio=self.max_ratio)
        self.kept_counts_ = counts
        return out


class CompensatedPrune(BaseEstimator, TransformerMixin):
    """Keep the first ``keep`` branches, rescaled to preserve output variance."""

    def __init__(self, keep: int = 4, drop_dead: bool = False):
        self.keep = keep
        self.drop_dead = drop_dead

    def fit(self, X, y=None):
        check_checkpoint(X)
        if self.keep < 1:
            raise ArgumentError(f"keep must be >= 1, got {self.keep}")
        self.fitted_ = True
        return self

    def transform(self, X) -> Checkpoint:
        return prune_checkpoint(check_checkpoint(X), keep=self.keep, drop_dead=self.drop_dead)
