"""Latent-space guided sampling of modality-availability scenarios."""

from .distortion import DistortionStats, aggregate_distortions, sample_distortion
from .distribution import (
    DistributionConfig,
    ScenarioDistribution,
    ScenarioWeighter,
    build_distribution,
    mix_uniform,
    standardize,
    temperature_softmax,
)
from .exceptions import (
    ConfigurationError,
    DimensionError,
    DivergenceError,
    FormatError,
    LSGSError,
    NumericalError,
    ParseError,
    ValidationError,
)
from .kernel import (
    KernelConfig,
    KernelScoreSmoother,
    KernelSystem,
    ScoreVector,
    build_gram,
    rbf_kernel,
    smooth_direct,
    smooth_spectral,
)
from .latent_io import LatentDump, read_latent_dump, write_latent_dump
from .sampler import ScenarioSampler, SplitMix64
from .scenarios import ScenarioMask, ScenarioSpace, enumerate_scenarios, format_mask, parse_mask

__version__ = "0.1.0"
