"""Desk-scale multimodal segmenter for end-to-end checks of guided sampling.

Three synthetic 8x8 modalities with a fixed informativeness hierarchy
(modality 0 strong, 1 weak, 2 pure noise) feed per-modality affine
encoders, an affine fusion layer producing the shared latent, and an affine
decoder to per-pixel logits. A missing modality contributes a zero encoder
output. Training is Adam on per-pixel binary cross-entropy, with one
scenario mask per mini-batch.
"""

import copy
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import check_positive
from .distortion import aggregate_distortions
from .distribution import DistributionConfig, build_distribution
from .exceptions import ConfigurationError, DivergenceError
from .kernel import KernelConfig
from .latent_io import LatentDump
from .sampler import MASK64, ScenarioSampler, SplitMix64, splitmix64_mix, uniform_block
from .scenarios import ScenarioMask, enumerate_scenarios

N_MODALITIES = 3
GRID = 8
PIXELS = GRID * GRID
ENC_DIM = 16
LATENT_DIM = 8

NOISE_SCALE = (0.3, 0.6, 1.0)
SIGNAL_SCALE = (1.0, 0.5, 0.0)
RECT_SIDE = (3, 7)

# stream tags for derive_seed
_DATA, _INIT, _PRE_MASK, _PRE_ORDER, _FT_MASK, _FT_ORDER = range(1, 7)


def derive_seed(seed, tag):
    return splitmix64_mix(splitmix64_mix(int(seed) & MASK64) ^ tag)


# --------------------------------------------------------------------------
# data


class ToySample(NamedTuple):
    inputs: np.ndarray  # (3, 64)
    label: np.ndarray  # (64,)


@dataclass(frozen=True, eq=False)
class ToyDataset:
    X: np.ndarray  # (n, 3, 64) float64
    y: np.ndarray  # (n, 64) float64 in {0, 1}

    def __len__(self):
        return self.X.shape[0]

    def __getitem__(self, i):
        return ToySample(self.X[i], self.y[i])

    def subset(self, idx):
        return ToyDataset(self.X[idx], self.y[idx])


class _UniformStream:
    """Sequential consumer of a splitmix64 stream, vectorized in blocks."""

    def __init__(self, seed):
        self.seed = seed
        self.position = 0

    def uniform(self, n):
        out = uniform_block(self.seed, n, self.position)
        self.position += n
        return out

    def normal(self, n):
        """Box-Muller, both outputs of each pair used."""
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        angle = 2.0 * math.pi * u[:, 1]
        z = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1).ravel()
        return z[:n]


def _rectangles(stream, n):
    lo, hi = RECT_SIDE
    u = stream.uniform(4 * n).reshape(n, 4)
    span = hi - lo + 1
    h = lo + np.minimum((u[:, 0] * span).astype(int), span - 1)
    w = lo + np.minimum((u[:, 1] * span).astype(int), span - 1)
    r0 = np.minimum((u[:, 2] * (GRID - h + 1)).astype(int), GRID - h)
    c0 = np.minimum((u[:, 3] * (GRID - w + 1)).astype(int), GRID - w)
    rows = np.arange(GRID)
    inside_r = (rows[None, :] >= r0[:, None]) & (rows[None, :] < (r0 + h)[:, None])
    inside_c = (rows[None, :] >= c0[:, None]) & (rows[None, :] < (c0 + w)[:, None])
    return (inside_r[:, :, None] & inside_c[:, None, :]).reshape(n, PIXELS).astype(np.float64)


def generate_dataset(seed, n_train, n_eval):
    """Synthetic (train, eval) split; bit-identical for a given seed."""
    if n_train < 1 or n_eval < 1:
        raise ConfigurationError("n_train and n_eval must be at least 1")
    n = n_train + n_eval
    stream = _UniformStream(derive_seed(seed, _DATA))
    y = _rectangles(stream, n)
    noise = stream.normal(n * N_MODALITIES * PIXELS).reshape(n, N_MODALITIES, PIXELS)
    signal = np.asarray(SIGNAL_SCALE)[None, :, None] * y[:, None, :]
    X = signal + np.asarray(NOISE_SCALE)[None, :, None] * noise
    full = ToyDataset(X, y)
    return full.subset(slice(0, n_train)), full.subset(slice(n_train, n))


# --------------------------------------------------------------------------
# model


def _param_shapes():
    shapes = {}
    for m in range(N_MODALITIES):
        shapes[f"W_enc{m}"] = (ENC_DIM, PIXELS)
        shapes[f"b_enc{m}"] = (ENC_DIM,)
    shapes["W_f"] = (LATENT_DIM, N_MODALITIES * ENC_DIM)
    shapes["b_f"] = (LATENT_DIM,)
    shapes["W_d"] = (PIXELS, LATENT_DIM)
    shapes["b_d"] = (PIXELS,)
    return shapes


PARAM_SHAPES = _param_shapes()


@dataclass(eq=False)
class ToyModel:
    """Parameter blocks keyed by name (see ``PARAM_SHAPES``)."""

    params: dict

    @classmethod
    def zeros(cls):
        return cls({k: np.zeros(s) for k, s in PARAM_SHAPES.items()})

    @classmethod
    def initialize(cls, seed):
        """Weights ``N(0, 1/fan_in)``, biases zero."""
        stream = _UniformStream(seed)
        params = {}
        for name, shape in PARAM_SHAPES.items():
            if name.startswith("W"):
                params[name] = stream.normal(int(np.prod(shape))).reshape(shape) / math.sqrt(shape[1])
            else:
                params[name] = np.zeros(shape)
        return cls(params)

    def copy(self):
        return ToyModel({k: v.copy() for k, v in self.params.items()})

    def allclose(self, other, atol=0.0):
        return all(np.allclose(self.params[k], other.params[k], rtol=0, atol=atol) for k in self.params)

    def is_finite(self):
        return all(np.isfinite(v).all() for v in self.params.values())


def _mask_bits(mask):
    return [mask.available(m) for m in range(N_MODALITIES)]


def forward_batch(model, X, mask):
    """Forward pass on ``X`` of shape ``(B, 3, 64)``.

    Returns ``(encoded, shared_latent, logits)`` with shapes ``(B, 48)``,
    ``(B, 8)``, ``(B, 64)``.
    """
    P = model.params
    B = X.shape[0]
    enc = np.zeros((B, N_MODALITIES * ENC_DIM))
    for m, on in enumerate(_mask_bits(mask)):
        if on:
            enc[:, m * ENC_DIM : (m + 1) * ENC_DIM] = X[:, m, :] @ P[f"W_enc{m}"].T + P[f"b_enc{m}"]
    latent = enc @ P["W_f"].T + P["b_f"]
    logits = latent @ P["W_d"].T + P["b_d"]
    return enc, latent, logits


def forward(model, sample, mask):
    """Single-sample forward; returns ``(shared_latent, logits)``."""
    _, latent, logits = forward_batch(model, np.asarray(sample.inputs)[None], mask)
    return latent[0], logits[0]


def bce_with_logits(logits, y):
    """Mean per-pixel binary cross-entropy."""
    return float(np.mean(np.maximum(logits, 0.0) - logits * y + np.log1p(np.exp(-np.abs(logits)))))


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def loss_and_grads(model, X, y, mask):
    P = model.params
    enc, latent, logits = forward_batch(model, X, mask)
    loss = bce_with_logits(logits, y)
    d_logits = (sigmoid(logits) - y) / logits.size
    grads = {
        "W_d": d_logits.T @ latent,
        "b_d": d_logits.sum(axis=0),
    }
    d_latent = d_logits @ P["W_d"]
    grads["W_f"] = d_latent.T @ enc
    grads["b_f"] = d_latent.sum(axis=0)
    d_enc = d_latent @ P["W_f"]
    for m, on in enumerate(_mask_bits(mask)):
        if on:
            d = d_enc[:, m * ENC_DIM : (m + 1) * ENC_DIM]
            grads[f"W_enc{m}"] = d.T @ X[:, m, :]
            grads[f"b_enc{m}"] = d.sum(axis=0)
        else:
            grads[f"W_enc{m}"] = np.zeros(PARAM_SHAPES[f"W_enc{m}"])
            grads[f"b_enc{m}"] = np.zeros(PARAM_SHAPES[f"b_enc{m}"])
    return loss, grads


# --------------------------------------------------------------------------
# optimization


@dataclass
class Adam:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params, grads, lr):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    pretrain_epochs: int = 70
    finetune_epochs: int = 10
    batch_size: int = 8
    learning_rate: float = 1e-4
    lr_decay: float = 0.91
    lr_decay_every: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("pretrain_epochs", "finetune_epochs", "batch_size", "lr_decay_every"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigurationError(f"{name} must be a positive int, got {value!r}")
        if self.learning_rate < 0 or not math.isfinite(self.learning_rate):
            raise ConfigurationError(f"learning_rate must be finite and >= 0, got {self.learning_rate!r}")
        check_positive(self.lr_decay, "lr_decay")

    def learning_rate_at(self, epoch):
        return self.learning_rate * self.lr_decay ** (epoch // self.lr_decay_every)


@dataclass(eq=False)
class TrainState:
    """Everything needed to resume training: model, optimizer, next epoch index."""

    model: ToyModel
    optimizer: Adam
    epoch: int = 0

    def snapshot(self):
        return copy.deepcopy(self)


class LogEntry(NamedTuple):
    stage: str
    epoch: int
    batch: int
    mask: ScenarioMask
    learning_rate: float
    loss: float


def _shuffled(n, rng):
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.next_below(i + 1)
        order[i], order[j] = order[j], order[i]
    return order


def train(config, state, data, sampler, epochs, strategy="uniform", stage="train", order_seed=0):
    """Run ``epochs`` epochs from ``state`` in place; returns the log.

    ``strategy="uniform"`` draws masks with ``sampler.draw_uniform`` and
    ``"guided"`` with ``sampler.draw``.
    """
    if strategy not in ("uniform", "guided"):
        raise ConfigurationError(f"unknown strategy {strategy!r}")
    draw = sampler.draw_uniform if strategy == "uniform" else sampler.draw
    order_rng = SplitMix64(order_seed)
    n = len(data)
    bs = config.batch_size
    log = []
    for _ in range(epochs):
        epoch = state.epoch
        lr = config.learning_rate_at(epoch)
        order = np.asarray(_shuffled(n, order_rng))
        for b, start in enumerate(range(0, n, bs)):
            idx = order[start : start + bs]
            mask = draw()
            loss, grads = loss_and_grads(state.model, data.X[idx], data.y[idx], mask)
            if not math.isfinite(loss):
                raise DivergenceError(stage, epoch, b)
            state.optimizer.step(state.model.params, grads, lr)
            log.append(LogEntry(stage, epoch, b, mask, lr, loss))
        if not state.model.is_finite():
            raise DivergenceError(stage, epoch, b)
        state.epoch += 1
    return log


# --------------------------------------------------------------------------
# latents and metrics


def harvest_latents(model, data):
    """Shared latent of every training sample under every scenario, one sample at a time."""
    space = enumerate_scenarios(N_MODALITIES)
    out = np.empty((len(data), space.K, LATENT_DIM), dtype=np.float32)
    for i in range(len(data)):
        sample = data[i]
        for k, mask in enumerate(space):
            latent, _ = forward(model, sample, mask)
            out[i, k] = latent
    return LatentDump(N_MODALITIES, out)


class ScenarioMetrics(NamedTuple):
    mask: ScenarioMask
    iou: float
    f1: float
    tp: int
    fp: int
    fn: int


def overlap_scores(tp, fp, fn):
    """Micro IoU and F1; with no positives and no predictions both are 1."""
    if tp + fp + fn == 0:
        return 1.0, 1.0
    return tp / (tp + fp + fn), 2 * tp / (2 * tp + fp + fn)


def confusion_counts(pred, truth):
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    return tp, fp, fn


def evaluate(model, data):
    rows = []
    for mask in enumerate_scenarios(N_MODALITIES):
        _, _, logits = forward_batch(model, data.X, mask)
        tp, fp, fn = confusion_counts(sigmoid(logits) > 0.5, data.y)
        iou, f1 = overlap_scores(tp, fp, fn)
        rows.append(ScenarioMetrics(mask, iou, f1, tp, fp, fn))
    return rows


def macro_iou(metrics):
    return float(np.mean([m.iou for m in metrics]))


# --------------------------------------------------------------------------
# two-arm experiment


@dataclass(eq=False)
class ExperimentReport:
    seed: int
    config: TrainConfig
    snapshot: TrainState
    stats: object
    distribution: object
    dump: LatentDump
    uniform_state: TrainState
    guided_state: TrainState
    metrics: dict  # arm -> list[ScenarioMetrics]
    log: list

    ARMS = ("uniform", "guided")

    def metric_rows(self):
        return [(arm, m.mask, m.iou, m.f1) for arm in self.ARMS for m in self.metrics[arm]]

    def summary_rows(self):
        return [
            (arm, macro_iou(self.metrics[arm]), float(np.mean([m.f1 for m in self.metrics[arm]])))
            for arm in self.ARMS
        ]


def run_experiment(config, seed=None, n_train=512, n_eval=256, kernel=None, weighting=None):
    """Pretrain under uniform dropout, then fine-tune two arms from the same snapshot.

    Arm ``uniform`` keeps uniform scenario sampling; arm ``guided`` samples
    from the distribution learned on the pretrained model's shared latents.
    """
    seed = config.seed if seed is None else seed
    config = replace(config, seed=seed)
    kernel = KernelConfig() if kernel is None else kernel
    weighting = DistributionConfig() if weighting is None else weighting
    space = enumerate_scenarios(N_MODALITIES)
    train_set, eval_set = generate_dataset(seed, n_train, n_eval)

    state = TrainState(ToyModel.initialize(derive_seed(seed, _INIT)), Adam())
    pre_sampler = ScenarioSampler(space, np.full(space.K, 1.0 / space.K), derive_seed(seed, _PRE_MASK))
    log = train(config, state, train_set, pre_sampler, config.pretrain_epochs, "uniform",
                stage="pretrain", order_seed=derive_seed(seed, _PRE_ORDER))
    snapshot = state.snapshot()

    dump = harvest_latents(snapshot.model, train_set)
    stats = aggregate_distortions(dump)
    dist = build_distribution(stats.eta, kernel, weighting, space=space)

    arms = {}
    for arm, strategy in (("uniform", "uniform"), ("guided", "guided")):
        arm_state = snapshot.snapshot()
        sampler = ScenarioSampler.from_distribution(dist, derive_seed(seed, _FT_MASK))
        log += train(config, arm_state, train_set, sampler, config.finetune_epochs, strategy,
                     stage=f"finetune_{arm}", order_seed=derive_seed(seed, _FT_ORDER))
        arms[arm] = arm_state

    metrics = {arm: evaluate(s.model, eval_set) for arm, s in arms.items()}
    return ExperimentReport(seed, config, snapshot, stats, dist, dump, arms["uniform"],
                            arms["guided"], metrics, log)


def write_report(report, out_dir):
    """Write the experiment artifacts into ``out_dir``; returns the file paths."""
    from pathlib import Path

    from .distortion import stats_to_table
    from .latent_io import (
        write_distortion_csv,
        write_distribution_csv,
        write_latent_dump,
        write_metrics_csv,
        write_summary_csv,
        write_train_log_csv,
    )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "distortions": out / "distortions.csv",
        "distribution": out / "distribution.csv",
        "metrics": out / "metrics.csv",
        "summary": out / "summary.csv",
        "train_log": out / "train_log.csv",
        "latents": out / "latents.lsgs",
    }
    write_distortion_csv(stats_to_table(report.stats), paths["distortions"])
    write_distribution_csv(report.distribution, paths["distribution"])
    write_metrics_csv(report.metric_rows(), paths["metrics"])
    write_summary_csv(report.summary_rows(), paths["summary"])
    write_train_log_csv(report.log, paths["train_log"])
    write_latent_dump(report.dump, paths["latents"])
    return paths


# --------------------------------------------------------------------------
# estimator facade


class ToySegmenter(BaseEstimator, ClassifierMixin):
    """Estimator wrapper over the toy model.

    ``fit`` pretrains with uniform scenario sampling; ``fine_tune`` continues
    training with masks drawn from a given scenario distribution. ``X`` has
    shape ``(n, 3, 64)``, ``y`` shape ``(n, 64)``.
    """

    def __init__(self, pretrain_epochs=70, finetune_epochs=10, batch_size=8,
                 learning_rate=1e-4, lr_decay=0.91, seed=0):
        self.pretrain_epochs = pretrain_epochs
        self.finetune_epochs = finetune_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.seed = seed

    def _config(self):
        return TrainConfig(self.pretrain_epochs, self.finetune_epochs, self.batch_size,
                           self.learning_rate, self.lr_decay, seed=self.seed)

    @staticmethod
    def _check_Xy(X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[1:] != (N_MODALITIES, PIXELS):
            raise ConfigurationError(f"X must have shape (n, {N_MODALITIES}, {PIXELS}), got {X.shape}")
        if y is None:
            return X, None
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (X.shape[0], PIXELS):
            raise ConfigurationError(f"y must have shape ({X.shape[0]}, {PIXELS}), got {y.shape}")
        return X, y

    def fit(self, X, y):
        X, y = self._check_Xy(X, y)
        config = self._config()
        self.space_ = enumerate_scenarios(N_MODALITIES)
        self.state_ = TrainState(ToyModel.initialize(derive_seed(self.seed, _INIT)), Adam())
        sampler = ScenarioSampler(self.space_, np.full(self.space_.K, 1.0 / self.space_.K),
                                  derive_seed(self.seed, _PRE_MASK))
        self.log_ = train(config, self.state_, ToyDataset(X, y), sampler, config.pretrain_epochs,
                          "uniform", stage="pretrain", order_seed=derive_seed(self.seed, _PRE_ORDER))
        self.classes_ = np.array([0, 1])
        return self

    def fine_tune(self, X, y, probabilities=None):
        """Continue training; ``probabilities=None`` keeps uniform sampling."""
        X, y = self._check_Xy(X, y)
        config = self._config()
        K = self.space_.K
        p = np.full(K, 1.0 / K) if probabilities is None else probabilities
        strategy = "uniform" if probabilities is None else "guided"
        sampler = ScenarioSampler(self.space_, p, derive_seed(self.seed, _FT_MASK))
        self.log_ += train(config, self.state_, ToyDataset(X, y), sampler, config.finetune_epochs,
                           strategy, stage=f"finetune_{strategy}",
                           order_seed=derive_seed(self.seed, _FT_ORDER))
        return self

    def _mask(self, mask):
        return ScenarioMask.full(N_MODALITIES) if mask is None else mask

    def decision_function(self, X, mask=None):
        X, _ = self._check_Xy(X)
        return forward_batch(self.state_.model, X, self._mask(mask))[2]

    def predict_proba(self, X, mask=None):
        return sigmoid(self.decision_function(X, mask))

    def predict(self, X, mask=None):
        return (self.predict_proba(X, mask) > 0.5).astype(int)

    def shared_latent(self, X, mask=None):
        X, _ = self._check_Xy(X)
        return forward_batch(self.state_.model, X, self._mask(mask))[1]

    def score(self, X, y, mask=None):
        """Micro IoU under ``mask``."""
        tp, fp, fn = confusion_counts(self.predict(X, mask), np.asarray(y))
        return overlap_scores(tp, fp, fn)[0]
