"""Evaluation metrics: activation-sign stability, sparsity, accuracy."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TiSnapshot:
    """Pre-activation sign matrix at a reference time, entries in {-1, 0, +1}."""

    signs: np.ndarray = field(repr=False)


def ti_snapshot(preactivations):
    return TiSnapshot(signs=np.sign(np.asarray(preactivations, dtype=np.float64)).astype(np.int8))


def ti_measure(start, final_preactivations, include_zeros, zero_tol=0.0):
    """Percentage of pre-activation entries whose sign is unchanged.

    Plain variant: an entry is stable iff its start and final signs match and
    are nonzero. include_zeros additionally counts entries whose final value
    is (within zero_tol of) zero as stable, the convention that a silent unit
    keeps its initial state.
    """
    final = np.asarray(final_preactivations, dtype=np.float64)
    if final.shape != start.signs.shape:
        raise ValueError(f"shape mismatch: {final.shape} vs {start.signs.shape}")
    final_signs = np.sign(final).astype(np.int8)
    if zero_tol > 0.0:
        final_signs[np.abs(final) <= zero_tol] = 0
    stable = (start.signs == final_signs) & (final_signs != 0)
    if include_zeros:
        stable = stable | (final_signs == 0)
    return 100.0 * float(np.count_nonzero(stable)) / stable.size


def count_zeros(theta, tol=1e-8):
    """Number of coordinates with |theta_i| <= tol."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return int(np.count_nonzero(np.abs(np.asarray(theta)) <= tol))


def accuracy(phi, labels):
    """Fraction of rows whose argmax matches the label.

    labels may be integer class indices or one-hot rows; argmax ties resolve
    to the lowest class index.
    """
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2 or phi.shape[1] < 2:
        raise ValueError("predictions must be (m, n_classes) with n_classes >= 2")
    labels = np.asarray(labels)
    if labels.ndim == 2:
        labels = np.argmax(labels, axis=1)
    if labels.shape[0] != phi.shape[0]:
        raise ValueError("label count does not match prediction rows")
    return float(np.mean(np.argmax(phi, axis=1) == labels))
