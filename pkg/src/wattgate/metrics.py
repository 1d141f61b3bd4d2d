"""Evaluation metrics in watts, gate histograms, and test-set reconstruction.

The scale-adjusted error aggregates absolute error over periods of
n_delta samples before averaging, so it rewards getting the energy of a
period right even when the exact sample timing is off. mae and
sae_delta share one accumulation order: summing left to right within a
period and then over periods, which makes sae_delta with n_delta=1
reproduce mae bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import ConfigurationError, DataError

_CHUNK = 512  # eval-time forward batch


def _as_pair(y_true, y_pred):
    a = np.asarray(y_true, dtype=np.float64)
    b = np.asarray(y_pred, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise DataError("metrics expect 1-d series")
    if a.size != b.size:
        raise ConfigurationError(
            f"series lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise DataError("metrics need at least one sample")
    if np.any(np.isnan(a)) or np.any(np.isnan(b)):
        raise DataError("metrics input contains missing samples")
    return a, b


def mae(y_true, y_pred) -> float:
    """Mean absolute error, accumulated strictly left to right."""
    a, b = _as_pair(y_true, y_pred)
    total = 0.0
    for t in range(a.size):
        total += abs(a[t] - b[t])
    return float(total / a.size)


def sae_delta(y_true, y_pred, n_delta: int) -> float:
    """Mean absolute per-sample energy error over disjoint periods of
    n_delta samples. A trailing partial period is dropped; having no
    complete period is an error."""
    a, b = _as_pair(y_true, y_pred)
    if n_delta < 1:
        raise ConfigurationError(f"n_delta must be >= 1, got {n_delta}")
    periods = a.size // n_delta
    if periods == 0:
        raise DataError(
            f"series of {a.size} samples has no complete period of {n_delta}")
    ta = a[:periods * n_delta].reshape(periods, n_delta)
    tb = b[:periods * n_delta].reshape(periods, n_delta)
    # Column-wise accumulation keeps each period's sum in left-to-right
    # order, matching mae exactly at n_delta=1.
    sums_a = np.zeros(periods)
    sums_b = np.zeros(periods)
    for j in range(n_delta):
        sums_a += ta[:, j]
        sums_b += tb[:, j]
    per_period = np.abs(sums_a - sums_b) / n_delta
    total = 0.0
    for tau in range(periods):
        total += per_period[tau]
    return float(total / periods)


def sweep_delta(y_true, y_pred, deltas) -> dict[int, float]:
    """sae_delta over a grid of period lengths."""
    deltas = list(deltas)
    if not deltas:
        raise ConfigurationError("sweep needs at least one period length")
    return {int(d): sae_delta(y_true, y_pred, int(d)) for d in deltas}


@dataclass
class GateHistogram:
    edges: np.ndarray    # bins + 1 boundaries covering [0, 1]
    counts: np.ndarray
    interior_mass: float  # fraction of probabilities in (0.1, 0.9)
    n: int


def on_prob_histogram(probs, bins: int = 20) -> GateHistogram:
    probs = np.asarray(probs, dtype=np.float64).reshape(-1)
    if probs.size == 0:
        raise DataError("histogram needs at least one probability")
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise DataError("gate probabilities must lie in [0, 1]")
    if bins < 1:
        raise ConfigurationError(f"bins must be >= 1, got {bins}")
    counts, edges = np.histogram(probs, bins=bins, range=(0.0, 1.0))
    interior = float(np.mean((probs > 0.1) & (probs < 0.9)))
    return GateHistogram(edges=edges, counts=counts,
                         interior_mass=interior, n=probs.size)


@dataclass
class Reconstruction:
    """Stitched test-set prediction in watts (clamped non-negative).

    covered counts the samples reached by whole windows; a trailing
    remainder shorter than s is not predicted. gate_probs carries the
    classifier probabilities for gated variants, aligned with
    predictions."""

    predictions_watts: np.ndarray
    covered: int
    gate_probs: np.ndarray | None


def reconstruct_predictions(model, aggregate_normalized, sigma: float,
                            batch_size: int = _CHUNK) -> Reconstruction:
    """Tile the series with non-overlapping target windows, run the model,
    and stitch the target slices back into one watts series."""
    from . import data as data_mod

    agg = np.asarray(aggregate_normalized, dtype=np.float64)
    if sigma <= 0:
        raise ConfigurationError(f"sigma must be positive, got {sigma}")
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    cfg = model.config
    origins = data_mod.eval_origins(agg.size, cfg.s)
    covered = origins.size * cfg.s
    preds = np.empty(covered)
    gated = None
    for lo in range(0, origins.size, batch_size):
        part = origins[lo:lo + batch_size]
        windows = data_mod.build_windows(agg, part, cfg.s, cfg.w)
        result = model.forward(Tensor(windows))
        out = model.target_view(result)
        preds[lo * cfg.s:lo * cfg.s + out.size] = out.reshape(-1)
        if result.o_hat is not None:
            if gated is None:
                gated = np.empty(covered)
            gated[lo * cfg.s:lo * cfg.s + out.size] = \
                result.o_hat.values.reshape(-1)
    preds *= sigma
    np.maximum(preds, 0.0, out=preds)
    return Reconstruction(predictions_watts=preds, covered=covered,
                          gate_probs=gated)


@dataclass
class ApplianceMetrics:
    name: str
    samples: int
    mae_watts: float
    sae_watts: dict[int, float]
    gate_interior_mass: float | None = None


@dataclass
class MetricsReport:
    appliances: list[ApplianceMetrics]

    def to_text(self) -> str:
        """Stable text rendering; identical runs produce identical bytes."""
        lines = []
        for app in self.appliances:
            lines.append(f"appliance {app.name}")
            lines.append(f"  samples {app.samples}")
            lines.append(f"  mae_watts {repr(app.mae_watts)}")
            for nd in sorted(app.sae_watts):
                lines.append(f"  sae_watts[{nd}] {repr(app.sae_watts[nd])}")
            if app.gate_interior_mass is not None:
                lines.append(f"  gate_interior_mass {repr(app.gate_interior_mass)}")
        return "\n".join(lines) + "\n"
