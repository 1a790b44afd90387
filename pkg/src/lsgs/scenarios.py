"""Modality-availability scenarios.

A scenario is a non-empty subset of the ``M`` input modalities, stored as a
bitmask where bit ``j`` set means modality ``j`` is available. The canonical
ordering used for every per-scenario vector in this package is ascending
bitmask value, so the full mask ``2**M - 1`` is always last.

Text form puts modality 0 in the leftmost character: at ``M=3`` the string
``"100"`` is the mask with only modality 0 available (``bits == 0b001``).
"""

from dataclasses import dataclass
from functools import cached_property

from .exceptions import ConfigurationError, ParseError

MAX_MODALITIES = 16


def _check_modality_count(modality_count):
    if isinstance(modality_count, bool) or not isinstance(modality_count, int):
        raise ConfigurationError(f"modality_count must be an int, got {modality_count!r}")
    if not 1 <= modality_count <= MAX_MODALITIES:
        raise ConfigurationError(
            f"modality_count must be in [1, {MAX_MODALITIES}], got {modality_count}"
        )


@dataclass(frozen=True, order=True)
class ScenarioMask:
    """Binary availability vector over ``modality_count`` modalities."""

    bits: int
    modality_count: int

    def __post_init__(self):
        _check_modality_count(self.modality_count)
        full = (1 << self.modality_count) - 1
        if not 1 <= self.bits <= full:
            raise ConfigurationError(
                f"mask bits must be in [1, {full}] for M={self.modality_count}, got {self.bits}"
            )

    @classmethod
    def full(cls, modality_count):
        return cls((1 << modality_count) - 1, modality_count)

    @property
    def is_full(self):
        return self.bits == (1 << self.modality_count) - 1

    def available(self, modality):
        return bool(self.bits >> modality & 1)

    def as_array(self):
        """Availability as a list of 0/1 ints, modality 0 first."""
        return [self.bits >> j & 1 for j in range(self.modality_count)]

    def __str__(self):
        return format_mask(self)


@dataclass(frozen=True)
class ScenarioSpace:
    """All ``K = 2**M - 1`` valid scenarios in canonical order."""

    modality_count: int
    scenarios: tuple

    @property
    def K(self):
        return len(self.scenarios)

    def __len__(self):
        return len(self.scenarios)

    def __iter__(self):
        return iter(self.scenarios)

    def __getitem__(self, k):
        return self.scenarios[k]

    @property
    def full(self):
        return self.scenarios[-1]

    @property
    def full_index(self):
        return self.K - 1

    def index(self, mask):
        """Canonical index of ``mask`` (its bitmask minus one)."""
        if mask.modality_count != self.modality_count:
            raise ConfigurationError(
                f"mask has M={mask.modality_count}, space has M={self.modality_count}"
            )
        return mask.bits - 1

    @cached_property
    def labels(self):
        return [format_mask(s) for s in self.scenarios]


def enumerate_scenarios(modality_count):
    """Return the scenario space for ``modality_count`` modalities."""
    _check_modality_count(modality_count)
    K = (1 << modality_count) - 1
    masks = tuple(ScenarioMask(bits, modality_count) for bits in range(1, K + 1))
    return ScenarioSpace(modality_count, masks)


def parse_mask(text, modality_count):
    """Decode a ``'0'/'1'`` string (modality 0 leftmost) into a mask."""
    _check_modality_count(modality_count)
    if len(text) != modality_count:
        raise ParseError(f"mask {text!r} has length {len(text)}, expected {modality_count}")
    bits = 0
    for j, ch in enumerate(text):
        if ch == "1":
            bits |= 1 << j
        elif ch != "0":
            raise ParseError(f"mask {text!r} contains non-binary character {ch!r}")
    if bits == 0:
        raise ParseError(f"mask {text!r} has no available modality")
    return ScenarioMask(bits, modality_count)


def format_mask(mask):
    return "".join("1" if mask.bits >> j & 1 else "0" for j in range(mask.modality_count))
