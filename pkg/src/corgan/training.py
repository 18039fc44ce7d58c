"""Adam, BCE, autoencoder pretraining and adversarial training."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, NumericError
from .layers import Module, corrupt
from .models import Autoencoder, synthesize
from .tensor import Tensor, no_grad, sample_noise

logger = logging.getLogger(__name__)

BCE_CLAMP = 1e-7


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 500
    batch_size: int = 500
    lr_ae: float = 1e-3
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    d_steps: int = 1
    seed: int = 0
    drop_prob: float = 0.1
    checkpoint_every: int = 10
    # early stopping on the column-mean deviation of generated samples
    patience: int = 50
    monitor_size: int = 1000

    def __post_init__(self):
        for name in ("epochs", "batch_size", "d_steps", "checkpoint_every", "patience", "monitor_size"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be at least 2 (batch norm, minibatch discrimination)")
        for name in ("lr_ae", "lr_g", "lr_d", "eps"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigurationError("Adam betas must lie in (0, 1)")
        if not 0 <= self.drop_prob < 1:
            raise ConfigurationError("drop_prob must lie in [0, 1)")


@dataclass
class EpochRecord:
    epoch: int
    loss_ae: float | None = None
    loss_d: float | None = None
    loss_g: float | None = None
    acc_real: float | None = None
    acc_fake: float | None = None
    monitor: float | None = None


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)
    stopped_early: bool = False
    best_epoch: int | None = None

    CSV_COLUMNS = ("epoch", "loss_ae", "loss_d", "loss_g", "acc_real", "acc_fake")

    def append(self, rec: EpochRecord) -> None:
        for key, value in asdict(rec).items():
            if value is not None and not math.isfinite(value):
                raise NumericError(f"epoch {rec.epoch}: {key} is not finite")
        self.records.append(rec)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def __len__(self) -> int:
        return len(self.records)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.CSV_COLUMNS)
            for rec in self.records:
                writer.writerow([_cell(getattr(rec, c)) for c in self.CSV_COLUMNS])


def _cell(v) -> str:
    if v is None:
        return ""
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads):
        raise ValueError(f"adam_step: {len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"adam_step: parameter {p.shape} vs gradient {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("adam_step: non-finite gradient")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


class Adam:
    """Adam over a fixed list of parameter tensors; missing grads count as zero."""

    def __init__(self, params: list[Tensor], lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state, self.lr, self.beta1, self.beta2, self.eps)


def bce_loss(y: Tensor, x) -> Tensor:
    """Mean binary cross-entropy of predictions ``y`` against targets ``x``.

    ``y`` is clamped to ``[1e-7, 1 - 1e-7]``; the gradient is evaluated at
    the clamped value and passed straight through the clamp.
    """
    xd = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    xd = np.broadcast_to(xd, y.shape)
    yc = np.clip(y.data, BCE_CLAMP, 1.0 - BCE_CLAMP)
    n = y.size
    loss = -np.sum(xd * np.log(yc) + (1.0 - xd) * np.log(1.0 - yc)) / n
    return Tensor.from_op(np.asarray(loss), (y,), lambda g: (g * (-(xd / yc) + (1.0 - xd) / (1.0 - yc)) / n,),
                          "bce")


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        if len(idx) >= 2:
            yield idx


def _values(data) -> np.ndarray:
    return np.asarray(getattr(data, "values", data), dtype=np.float64)


# ---------------------------------------------------------------------------
# autoencoder pretraining
# ---------------------------------------------------------------------------

def pretrain_autoencoder(ae: Autoencoder, data, cfg: TrainingConfig,
                         on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainingLog:
    """Minimise ``bce(Dec(Enc(corrupt(x))), x)`` with Adam over shuffled minibatches."""
    x_all = _values(data)
    if getattr(data, "mode", "binary") != "binary":
        raise ConfigurationError("autoencoder pretraining needs binary (discrete-mode) data")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(ae.parameters(), cfg.lr_ae, cfg.beta1, cfg.beta2, cfg.eps)
    log = TrainingLog()
    ae.train()
    for epoch in range(1, cfg.epochs + 1):
        total, count = 0.0, 0
        for idx in _batches(len(x_all), cfg.batch_size, rng):
            x = x_all[idx]
            x_in = corrupt(x, cfg.drop_prob, rng)
            opt.zero_grad()
            loss = bce_loss(ae(Tensor(x_in)), x)
            if not math.isfinite(loss.item()):
                raise NumericError(f"autoencoder pretraining diverged at epoch {epoch}")
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            count += len(idx)
        rec = EpochRecord(epoch, loss_ae=total / count)
        log.append(rec)
        if on_epoch:
            on_epoch(rec)
        logger.debug("ae epoch %d bce %.5f", epoch, rec.loss_ae)
    ae.eval()
    return log


# ---------------------------------------------------------------------------
# adversarial training
# ---------------------------------------------------------------------------

class TrainingDiverged(NumericError):
    """Adversarial training produced non-finite values; models hold the last good checkpoint."""

    def __init__(self, message: str, log: TrainingLog):
        super().__init__(message)
        self.log = log


def _snapshot(modules: list[Module]) -> list[dict]:
    return [{**{n: p.data.copy() for n, p in m.named_parameters()},
             **{"buf:" + n: b.copy() for n, b in m.named_buffers()}} for m in modules]


def _restore(modules: list[Module], snaps: list[dict]) -> None:
    for m, snap in zip(modules, snaps):
        for n, p in m.named_parameters():
            p.data = snap[n].copy()
        for n, b in m.named_buffers():
            b[...] = snap["buf:" + n]


def train_gan(generator: Module, discriminator: Module, decoder: Module | None, data, cfg: TrainingConfig,
              mode: str = "discrete", noise_width: int | None = None,
              on_checkpoint: Callable[[int], None] | None = None,
              on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainingLog:
    """Alternate discriminator and generator updates.

    The discriminator maximises ``log D(x) + log(1 - D(x_hat))`` and the
    generator minimises ``-log D(x_hat)``, where ``x_hat`` is
    ``round(Dec(G(z)))`` (straight-through) in discrete mode and ``G(z)`` in
    continuous mode. The decoder is never updated.

    Early stopping tracks the mean absolute gap between column means of
    real data and ``cfg.monitor_size`` generated rows; after ``cfg.patience``
    epochs without improvement training stops, and the generator and
    discriminator are restored to the best-monitored epoch.
    """
    if mode == "discrete" and decoder is None:
        raise ConfigurationError("discrete-mode GAN training needs a pretrained decoder")
    if mode == "continuous" and decoder is not None:
        raise ConfigurationError("continuous-mode GAN training takes no decoder")
    x_all = _values(data)
    if noise_width is None:
        noise_width = _infer_noise_width(generator)
    rng = np.random.default_rng(cfg.seed)
    opt_g = Adam(generator.parameters(), cfg.lr_g, cfg.beta1, cfg.beta2, cfg.eps)
    opt_d = Adam(discriminator.parameters(), cfg.lr_d, cfg.beta1, cfg.beta2, cfg.eps)
    frozen = decoder.parameters() if decoder is not None else []
    for p in frozen:
        p.requires_grad = False
    if decoder is not None:
        decoder.eval()
    target_means = x_all.mean(axis=0)
    monitor_rng = np.random.default_rng([cfg.seed, 1])
    monitor_z = sample_noise(cfg.monitor_size, noise_width, monitor_rng)
    log = TrainingLog()
    models = [generator, discriminator]
    last_good = _snapshot(models)
    best, best_state, since_best = math.inf, last_good, 0
    try:
        for epoch in range(1, cfg.epochs + 1):
            generator.train()
            discriminator.train()
            sums = np.zeros(4)
            steps = 0
            for idx in _batches(len(x_all), cfg.batch_size, rng):
                x_real = Tensor(x_all[idx])
                nb = len(idx)
                for _ in range(cfg.d_steps):
                    with no_grad():
                        x_fake = synthesize(generator, decoder, sample_noise(nb, noise_width, rng), mode)
                    opt_d.zero_grad()
                    d_real = discriminator(x_real)
                    d_fake = discriminator(x_fake)
                    loss_d = bce_loss(d_real, 1.0) + bce_loss(d_fake, 0.0)
                    loss_d.backward()
                    opt_d.step()
                opt_g.zero_grad()
                d_gen = discriminator(synthesize(generator, decoder, sample_noise(nb, noise_width, rng), mode))
                loss_g = bce_loss(d_gen, 1.0)
                loss_g.backward()
                opt_g.step()
                opt_d.zero_grad()
                sums += [loss_d.item(), loss_g.item(), np.mean(d_real.data >= 0.5),
                         np.mean(d_fake.data < 0.5)]
                steps += 1
            if not np.all(np.isfinite(sums)):
                raise NumericError(f"non-finite loss in epoch {epoch}")
            with no_grad():
                generator.eval()
                sample = synthesize(generator, decoder, monitor_z, mode).data
                generator.train()
            if not np.all(np.isfinite(sample)):
                raise NumericError(f"generator produced non-finite output in epoch {epoch}")
            monitor = float(np.mean(np.abs(sample.mean(axis=0) - target_means)))
            rec = EpochRecord(epoch, loss_d=sums[0] / steps, loss_g=sums[1] / steps,
                              acc_real=sums[2] / steps, acc_fake=sums[3] / steps, monitor=monitor)
            log.append(rec)
            if on_epoch:
                on_epoch(rec)
            logger.debug("gan epoch %d d %.4f g %.4f monitor %.4f", epoch, rec.loss_d, rec.loss_g, monitor)
            if monitor < best:
                best, best_state, since_best = monitor, _snapshot(models), 0
                log.best_epoch = epoch
            else:
                since_best += 1
            if epoch % cfg.checkpoint_every == 0:
                last_good = _snapshot(models)
                if on_checkpoint:
                    on_checkpoint(epoch)
            if since_best >= cfg.patience:
                log.stopped_early = True
                break
    except NumericError as exc:
        _restore(models, last_good)
        raise TrainingDiverged(f"adversarial training diverged: {exc}", log) from exc
    finally:
        for p in frozen:
            p.requires_grad = True
    _restore(models, best_state)
    generator.eval()
    discriminator.eval()
    return log


def _infer_noise_width(generator: Module) -> int:
    first = generator.layers[0]
    return first.weight.shape[0]
