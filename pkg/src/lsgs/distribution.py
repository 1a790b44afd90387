"""From smoothed scenario scores to a sampling distribution.

Three steps on the score vector ``r``: population z-scoring, a
temperature softmax, and a convex mix with the uniform distribution that
guarantees every scenario at least ``(1 - gamma) / K`` probability.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_positive, check_unit_interval, check_vector
from .exceptions import DimensionError
from .kernel import KernelConfig, build_gram, smooth_direct
from .scenarios import ScenarioSpace, enumerate_scenarios


@dataclass(frozen=True)
class DistributionConfig:
    tau: float = 0.5
    gamma: float = 0.5
    epsilon_sigma: float = 1e-12

    def __post_init__(self):
        check_positive(self.tau, "tau")
        check_unit_interval(self.gamma, "gamma")
        check_positive(self.epsilon_sigma, "epsilon_sigma")


@dataclass(frozen=True, eq=False)
class ScenarioDistribution:
    space: ScenarioSpace
    eta: np.ndarray
    r: np.ndarray
    r_mean: float
    r_std: float
    r_standardized: np.ndarray
    p_soft: np.ndarray
    p: np.ndarray
    coefficients: np.ndarray = None

    @property
    def K(self):
        return self.space.K

    def probability(self, mask):
        return float(self.p[self.space.index(mask)])


def _population_stats(r):
    mu = float(np.mean(r))
    sd = float(np.sqrt(np.mean((r - mu) ** 2)))
    return mu, sd


def standardize(r, epsilon_sigma=1e-12):
    """Population z-scores; the zero vector when the spread is below ``epsilon_sigma``."""
    r = check_vector(r, "r")
    mu, sd = _population_stats(r)
    if sd < epsilon_sigma:
        return np.zeros_like(r)
    return (r - mu) / sd


def temperature_softmax(r_std, tau):
    check_positive(tau, "tau")
    logits = tau * check_vector(r_std, "r_std")
    e = np.exp(logits - logits.max())
    return e / e.sum()


def mix_uniform(p_soft, gamma):
    """``(1 - gamma)/K + gamma * p_soft``, renormalized.

    ``gamma == 0`` and an exactly uniform ``p_soft`` both return the exact
    uniform vector; renormalizing a sum of ``1/K`` terms would perturb it.
    """
    gamma = check_unit_interval(gamma, "gamma")
    p_soft = check_vector(p_soft, "p_soft")
    K = p_soft.shape[0]
    if gamma == 0.0 or (p_soft == p_soft[0]).all():
        return np.full(K, 1.0 / K)
    p = (1.0 - gamma) / K + gamma * p_soft
    total = p.sum()
    if total != 1.0:
        p = p / total
    return p


def distribution_from_scores(space, eta, r, dcfg, coefficients=None):
    r = check_vector(r, "r")
    if r.shape[0] != space.K:
        raise DimensionError(f"r has length {r.shape[0]}, space has K={space.K}")
    mu, sd = _population_stats(r)
    r_std = standardize(r, dcfg.epsilon_sigma)
    p_soft = temperature_softmax(r_std, dcfg.tau)
    p = mix_uniform(p_soft, dcfg.gamma)
    return ScenarioDistribution(
        space=space,
        eta=np.array(eta, dtype=np.float64),
        r=r,
        r_mean=mu,
        r_std=sd,
        r_standardized=r_std,
        p_soft=p_soft,
        p=p,
        coefficients=coefficients,
    )


def _space_for(K):
    M = K.bit_length()
    if (1 << M) - 1 != K:
        raise DimensionError(f"K={K} is not 2**M - 1 for any modality count M")
    return enumerate_scenarios(M)


def build_distribution(eta, kcfg=None, dcfg=None, space=None):
    """Full pipeline: Gram -> Cholesky smoothing -> z-score -> softmax -> uniform mix."""
    kcfg = KernelConfig() if kcfg is None else kcfg
    dcfg = DistributionConfig() if dcfg is None else dcfg
    eta = check_vector(eta, "eta")
    if space is None:
        space = _space_for(eta.shape[0])
    elif space.K != eta.shape[0]:
        raise DimensionError(f"eta has length {eta.shape[0]}, space has K={space.K}")
    system = build_gram(eta, kcfg)
    scores = smooth_direct(system, eta, kcfg.lam)
    return distribution_from_scores(space, eta, scores.r, dcfg, scores.coefficients)


class ScenarioWeighter(BaseEstimator):
    """Learns a scenario sampling distribution from per-scenario distortions.

    Defaults are the published configuration (``sigma=1``, ``lam=1e-3``,
    ``tau=0.5``, ``gamma=0.5``).

    Examples
    --------
    >>> w = ScenarioWeighter().fit([0.4, 0.3, 0.1, 0.6, 0.2, 0.05, 0.0])
    >>> round(float(w.probabilities_.sum()), 12)
    1.0
    """

    def __init__(self, sigma=1.0, lam=1e-3, tau=0.5, gamma=0.5, epsilon_sigma=1e-12):
        self.sigma = sigma
        self.lam = lam
        self.tau = tau
        self.gamma = gamma
        self.epsilon_sigma = epsilon_sigma

    def fit(self, X, y=None):
        """``X`` is the eta vector (shape ``(K,)`` or ``(K, 1)``) or a ``DistortionStats``."""
        space = getattr(X, "space", None)
        eta = X.eta if space is not None else check_vector(X, "X", allow_column=True)
        self.distribution_ = build_distribution(
            eta,
            KernelConfig(self.sigma, self.lam),
            DistributionConfig(self.tau, self.gamma, self.epsilon_sigma),
            space=space,
        )
        self.probabilities_ = self.distribution_.p
        self.scores_ = self.distribution_.r
        self.n_features_in_ = 1
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).probabilities_

    def sampler(self, seed):
        from .sampler import ScenarioSampler

        return ScenarioSampler.from_distribution(self.distribution_, seed)
