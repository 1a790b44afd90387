"""Per-scenario shared latent distortion.

For sample ``i`` and scenario ``k`` the distortion is the mean squared
deviation of the shared latent from its full-modality reference; averaging
over the samples gives the scenario importance ``eta[k]``.

Summation order is fixed (latent entries ascending, then samples ascending)
with float64 accumulators so identical dumps give bit-identical results.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, ValidationError
from .latent_io import DistortionRow, DistortionTable
from .scenarios import ScenarioSpace, enumerate_scenarios


@dataclass(frozen=True, eq=False)
class DistortionStats:
    space: ScenarioSpace
    eta: np.ndarray
    n_samples: int

    def __post_init__(self):
        eta = np.array(self.eta, dtype=np.float64)
        if eta.shape != (self.space.K,):
            raise DimensionError(f"eta must have length {self.space.K}, got shape {eta.shape}")
        if not np.isfinite(eta).all() or (eta < 0).any():
            raise ValidationError("eta entries must be finite and non-negative")
        if eta[-1] != 0.0:
            raise ValidationError("eta at the full mask must be exactly zero")
        eta.flags.writeable = False
        object.__setattr__(self, "eta", eta)

    @property
    def nu(self):
        """Raw scenario importance vector (identical to ``eta``)."""
        return self.eta


def sample_distortion(latent_k, latent_full):
    """Mean squared difference of two latent vectors, summed left to right."""
    a = np.asarray(latent_k, dtype=np.float64).ravel()
    b = np.asarray(latent_full, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"latent lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise DimensionError("latent vectors must have at least one entry")
    diff = a - b
    # cumsum is a strict sequential reduction; np.sum would use pairwise adds
    return float(np.cumsum(diff * diff)[-1] / a.size)


def _sequential_mean_sq(diff):
    """Row-wise sequential mean of squares over the last axis."""
    sq = diff * diff
    return np.cumsum(sq, axis=-1)[..., -1] / diff.shape[-1]


def aggregate_distortions(dump):
    """Average per-scenario distortion over every sample in ``dump``."""
    N = dump.sample_count
    if N == 0:
        raise ValidationError("latent dump has no samples")
    lat = dump.latents.astype(np.float64)
    diff = lat - lat[:, -1:, :]
    per_sample = _sequential_mean_sq(diff)  # (N, K)
    eta = np.cumsum(per_sample, axis=0)[-1] / N
    eta[-1] = 0.0  # identical records, already exactly zero
    return DistortionStats(dump.space, eta, N)


def stats_to_table(stats):
    return DistortionTable(
        tuple(
            DistortionRow(mask, float(e), stats.n_samples)
            for mask, e in zip(stats.space, stats.eta)
        )
    )


def table_to_stats(table):
    rows = table.rows
    counts = {r.n_samples for r in rows}
    if len(counts) != 1:
        raise ValidationError(f"rows disagree on n_samples: {sorted(counts)}")
    space = enumerate_scenarios(rows[0].mask.modality_count)
    return DistortionStats(space, [r.mean_distortion for r in rows], counts.pop())
