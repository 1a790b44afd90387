"""Serialization of latent dumps and per-scenario tables.

Binary latent dump (``.lsgs``), little-endian::

    offset  size  field
    0       4     magic b"LSGS"
    4       4     u32 version (1)
    8       4     u32 modality count M
    12      4     u32 sample count N
    16      4     u32 latent dimension D
    20      ...   N*K*D float32, samples outermost, scenarios by ascending
                  bitmask, latent entries innermost (K = 2**M - 1)

CSV files use ``,`` separators, ``.`` decimals, ``\\n`` line endings and no
quoting. Reals are written with 17 significant digits, which round-trips
IEEE doubles exactly.
"""

import contextlib
import csv
import io
import math
import os
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import FormatError, ParseError, ValidationError
from .scenarios import MAX_MODALITIES, ScenarioMask, ScenarioSpace, enumerate_scenarios, parse_mask

MAGIC = b"LSGS"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")
HEADER_SIZE = _HEADER.size

DISTORTION_HEADER = ("scenario_mask", "mean_distortion", "n_samples")
DISTRIBUTION_HEADER = ("scenario_mask", "eta", "r", "p")
METRICS_HEADER = ("arm", "scenario_mask", "iou", "f1")
TRAIN_LOG_HEADER = ("stage", "epoch", "batch", "scenario_mask", "learning_rate", "loss")
SUMMARY_HEADER = ("arm", "mean_iou", "mean_f1")


def format_real(x):
    return "%.17g" % x


@contextlib.contextmanager
def _opened(target, mode):
    if isinstance(target, (str, os.PathLike)):
        kwargs = {} if "b" in mode else {"newline": "", "encoding": "utf-8"}
        with open(target, mode, **kwargs) as fh:
            yield fh
    else:
        yield target


# --------------------------------------------------------------------------
# binary latent dumps


@dataclass(frozen=True, eq=False)
class LatentDump:
    """Shared latents for every (sample, scenario) pair.

    ``latents`` has shape ``(N, K, D)`` and dtype float32. The record at
    scenario index ``K - 1`` is the full-modality reference.
    """

    modality_count: int
    latents: np.ndarray

    def __post_init__(self):
        space = enumerate_scenarios(self.modality_count)
        arr = np.ascontiguousarray(self.latents, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[1] != space.K:
            raise ValidationError(
                f"latents must have shape (N, {space.K}, D), got {np.shape(self.latents)}"
            )
        if arr.shape[2] < 1:
            raise ValidationError("latent dimension D must be at least 1")
        if not np.isfinite(arr).all():
            raise ValidationError("latents contain non-finite values")
        object.__setattr__(self, "latents", arr)

    @property
    def space(self):
        return enumerate_scenarios(self.modality_count)

    @property
    def sample_count(self):
        return self.latents.shape[0]

    @property
    def latent_dim(self):
        return self.latents.shape[2]

    def full_reference(self):
        return self.latents[:, -1, :]

    def __eq__(self, other):
        if not isinstance(other, LatentDump):
            return NotImplemented
        return (
            self.modality_count == other.modality_count
            and self.latents.shape == other.latents.shape
            and self.latents.tobytes() == other.latents.tobytes()
        )


def dump_to_bytes(dump):
    header = _HEADER.pack(MAGIC, VERSION, dump.modality_count, dump.sample_count, dump.latent_dim)
    return header + dump.latents.astype("<f4", copy=False).tobytes(order="C")


def write_latent_dump(dump, sink):
    with _opened(sink, "wb") as fh:
        fh.write(dump_to_bytes(dump))


def dump_from_bytes(data):
    if len(data) < HEADER_SIZE:
        raise FormatError(
            f"truncated header: need {HEADER_SIZE} bytes, got {len(data)}", len(data)
        )
    magic, version, M, N, D = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if not 1 <= M <= MAX_MODALITIES:
        raise FormatError(f"modality count {M} out of range [1, {MAX_MODALITIES}]", 8)
    if D < 1:
        raise FormatError("latent dimension must be at least 1", 16)
    K = (1 << M) - 1
    expected = N * K * D * 4
    payload = len(data) - HEADER_SIZE
    if payload < expected:
        # offset of the first missing byte
        raise FormatError(
            f"truncated payload: expected {expected} bytes, got {payload}", len(data)
        )
    if payload > expected:
        raise FormatError(
            f"trailing data: {payload - expected} unexpected bytes", HEADER_SIZE + expected
        )
    values = np.frombuffer(data, dtype="<f4", count=N * K * D, offset=HEADER_SIZE)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise FormatError("non-finite latent value", HEADER_SIZE + 4 * int(bad[0]))
    latents = values.astype(np.float32).reshape(N, K, D)
    return LatentDump(M, latents)


def read_latent_dump(source):
    with _opened(source, "rb") as fh:
        data = fh.read()
    return dump_from_bytes(data)


# --------------------------------------------------------------------------
# CSV helpers


def _read_rows(source, header):
    with _opened(source, "r") as fh:
        text = fh.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValidationError("empty CSV")
    if tuple(rows[0]) != header:
        raise ValidationError(f"expected header {','.join(header)!r}, got {','.join(rows[0])!r}")
    body = rows[1:]
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ValidationError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
    return body


def _parse_real(text, what, lineno):
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"line {lineno}: {what} {text!r} is not a number") from None
    if not math.isfinite(value):
        raise ValidationError(f"line {lineno}: {what} is not finite")
    return value


def _parse_masks(cells):
    """Decode the mask column and check it lists every scenario once, in order."""
    if not cells:
        raise ValidationError("no scenario rows")
    M = len(cells[0])
    try:
        masks = [parse_mask(c, M) for c in cells]
    except (ParseError, ValueError) as exc:
        raise ValidationError(f"bad scenario mask: {exc}") from None
    space = enumerate_scenarios(M)
    bits = [m.bits for m in masks]
    if len(set(bits)) != len(bits):
        raise ValidationError("duplicate scenario masks")
    if len(bits) != space.K:
        raise ValidationError(f"expected {space.K} scenarios for M={M}, got {len(bits)}")
    if bits != sorted(bits):
        raise ValidationError("scenario rows are not in canonical (ascending bitmask) order")
    return space


def _write_lines(sink, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    text = "\n".join(lines) + "\n"
    with _opened(sink, "w") as fh:
        fh.write(text)


# --------------------------------------------------------------------------
# distortion tables


class DistortionRow(NamedTuple):
    mask: ScenarioMask
    mean_distortion: float
    n_samples: int


@dataclass(frozen=True)
class DistortionTable:
    rows: tuple

    def __post_init__(self):
        rows = tuple(DistortionRow(*r) for r in self.rows)
        object.__setattr__(self, "rows", rows)
        validate_distortion_rows(rows)

    @property
    def space(self):
        return enumerate_scenarios(self.rows[0].mask.modality_count)


def validate_distortion_rows(rows):
    if not rows:
        raise ValidationError("distortion table has no rows")
    M = rows[0].mask.modality_count
    space = enumerate_scenarios(M)
    bits = [r.mask.bits for r in rows]
    if any(r.mask.modality_count != M for r in rows):
        raise ValidationError("rows mix different modality counts")
    if len(set(bits)) != len(bits):
        raise ValidationError("duplicate scenario masks")
    if len(rows) != space.K:
        raise ValidationError(f"expected {space.K} scenarios, got {len(rows)}")
    if bits != list(range(1, space.K + 1)):
        raise ValidationError("scenario rows are not in canonical (ascending bitmask) order")
    for r in rows:
        d = r.mean_distortion
        if not math.isfinite(d) or d < 0:
            raise ValidationError(f"scenario {r.mask}: distortion must be finite and >= 0, got {d}")
        if isinstance(r.n_samples, bool) or not isinstance(r.n_samples, int) or r.n_samples < 1:
            raise ValidationError(f"scenario {r.mask}: n_samples must be a positive int")
    if rows[-1].mean_distortion != 0.0:
        raise ValidationError("full-modality scenario must have zero distortion")


def write_distortion_csv(table, sink):
    _write_lines(
        sink,
        DISTORTION_HEADER,
        ((str(r.mask), format_real(r.mean_distortion), str(r.n_samples)) for r in table.rows),
    )


def read_distortion_csv(source):
    body = _read_rows(source, DISTORTION_HEADER)
    space = _parse_masks([row[0] for row in body])
    rows = []
    for lineno, (row, mask) in enumerate(zip(body, space), start=2):
        value = _parse_real(row[1], "mean_distortion", lineno)
        try:
            n = int(row[2])
        except ValueError:
            raise ValidationError(f"line {lineno}: n_samples {row[2]!r} is not an integer") from None
        rows.append(DistortionRow(mask, value, n))
    return DistortionTable(tuple(rows))


# --------------------------------------------------------------------------
# distribution tables


class DistributionRecord(NamedTuple):
    """Columns of a distribution CSV, as float64 arrays in canonical order."""

    space: ScenarioSpace
    eta: np.ndarray
    r: np.ndarray
    p: np.ndarray


def write_distribution_csv(dist, sink):
    """Write anything with ``space``, ``eta``, ``r`` and ``p`` attributes."""
    rows = (
        (label, format_real(e), format_real(r), format_real(p))
        for label, e, r, p in zip(dist.space.labels, dist.eta, dist.r, dist.p)
    )
    _write_lines(sink, DISTRIBUTION_HEADER, rows)


def read_distribution_csv(source):
    body = _read_rows(source, DISTRIBUTION_HEADER)
    space = _parse_masks([row[0] for row in body])
    cols = [
        np.array([_parse_real(row[c], name, i + 2) for i, row in enumerate(body)])
        for c, name in ((1, "eta"), (2, "r"), (3, "p"))
    ]
    if (cols[2] < 0).any():
        raise ValidationError("negative probability")
    return DistributionRecord(space, *cols)


# --------------------------------------------------------------------------
# experiment outputs


def write_metrics_csv(rows, sink):
    """``rows`` are ``(arm, mask, iou, f1)`` tuples."""
    _write_lines(
        sink,
        METRICS_HEADER,
        ((arm, str(mask), format_real(iou), format_real(f1)) for arm, mask, iou, f1 in rows),
    )


def read_metrics_csv(source):
    body = _read_rows(source, METRICS_HEADER)
    out = []
    for lineno, row in enumerate(body, start=2):
        out.append(
            (row[0], row[1], _parse_real(row[2], "iou", lineno), _parse_real(row[3], "f1", lineno))
        )
    return out


def write_train_log_csv(entries, sink):
    """``entries`` are :class:`lsgs.toy.LogEntry` records."""
    _write_lines(
        sink,
        TRAIN_LOG_HEADER,
        (
            (e.stage, str(e.epoch), str(e.batch), str(e.mask), format_real(e.learning_rate),
             format_real(e.loss))
            for e in entries
        ),
    )


def write_summary_csv(rows, sink):
    _write_lines(
        sink,
        SUMMARY_HEADER,
        ((arm, format_real(iou), format_real(f1)) for arm, iou, f1 in rows),
    )
