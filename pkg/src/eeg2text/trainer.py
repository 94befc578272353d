"""Optimisation loop, step learning-rate schedule, best-epoch selection and
checkpointing.

Defaults follow the reported setup: SGD, 25 epochs, batch size 32, step
schedule with step size 20, every seed 312. The schedule's decay factor is
not reported; 0.1 is used.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import torch

from .data import DatasetSplit, EEGSentenceRecord, text_fingerprint
from .errors import CheckpointError, ConfigError, NumericError

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "eeg2text-checkpoint"
CHECKPOINT_VERSION = 1

# metric name -> higher is better
METRICS = {
    "dev_loss": False,
    "dev_bleu1": True,
    "dev_accuracy": True,
    "dev_macro_f1": True,
}


@dataclass
class TrainConfig:
    learning_rate: float = 5e-7
    epochs: int = 25
    batch_size: int = 32
    optimizer: str = "sgd"
    momentum: float = 0.0
    step_size: int = 20
    gamma: float = 0.1
    seed: int = 312
    selection_metric: str = "dev_loss"
    max_grad_norm: float | None = None
    decode_strategy: str = "greedy"

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.step_size < 1:
            raise ConfigError("step_size must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.selection_metric not in METRICS:
            raise ConfigError(f"unknown selection metric {self.selection_metric!r}; choose from {sorted(METRICS)}")

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * self.gamma ** (epoch // self.step_size)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainState:
    epoch: int = 0  # next epoch to run
    global_step: int = 0
    current_lr: float = 0.0
    best_dev_value: float | None = None
    best_epoch: int | None = None
    shuffle_rng: torch.Tensor | None = None
    torch_rng: torch.Tensor | None = None
    optimizer_state: dict | None = None
    best_model_state: dict | None = None
    history: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "global_step": self.global_step,
            "current_lr": self.current_lr,
            "best_dev_value": self.best_dev_value,
            "best_epoch": self.best_epoch,
            "shuffle_rng": self.shuffle_rng,
            "torch_rng": self.torch_rng,
            "optimizer_state": self.optimizer_state,
            "best_model_state": self.best_model_state,
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainState":
        return cls(**d)


@dataclass
class TrainLog:
    config: dict
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    best_dev_value: float | None = None

    @property
    def train_losses(self) -> list[float]:
        return [e["train_loss"] for e in self.epochs]

    @property
    def lrs(self) -> list[float]:
        return [e["lr"] for e in self.epochs]


def _is_better(value: float, best: float | None, higher: bool) -> bool:
    if best is None:
        return True
    return value > best if higher else value < best


def make_optimizer(params, cfg: TrainConfig) -> torch.optim.Optimizer:
    params = [p for p in params if p.requires_grad]
    if cfg.optimizer == "sgd":
        return torch.optim.SGD(params, lr=cfg.learning_rate, momentum=cfg.momentum)
    return torch.optim.Adam(params, lr=cfg.learning_rate)


def run_epochs(
    model: torch.nn.Module,
    n_train: int,
    batch_loss: Callable[[list[int]], tuple[torch.Tensor, int]],
    dev_metric: Callable[[], float] | None,
    cfg: TrainConfig,
    *,
    state: TrainState | None = None,
    on_epoch_end: Callable[[TrainState, dict], None] | None = None,
    log_fh=None,
) -> TrainLog:
    """Shared loop for the decoder and the EEG baselines.

    ``batch_loss(indices)`` returns a mean loss and the number of items it
    averages over. After each epoch ``dev_metric`` is evaluated and the
    parameters of the best epoch (ties: earliest) are restored at the end.
    """
    higher = METRICS[cfg.selection_metric]
    optimizer = make_optimizer(model.parameters(), cfg)
    shuffle = torch.Generator()
    if state is None:
        state = TrainState()
        torch.manual_seed(cfg.seed)
        shuffle.manual_seed(cfg.seed)
    else:
        torch.set_rng_state(state.torch_rng)
        shuffle.set_state(state.shuffle_rng)
        if state.optimizer_state is not None:
            optimizer.load_state_dict(state.optimizer_state)
    train_log = TrainLog(config=cfg.to_dict(), epochs=list(state.history),
                         best_epoch=state.best_epoch, best_dev_value=state.best_dev_value)
    if log_fh is not None and state.epoch == 0:
        log_fh.write(json.dumps({"config": cfg.to_dict()}) + "\n")
        log_fh.flush()

    for epoch in range(state.epoch, cfg.epochs):
        t0 = time.perf_counter()
        lr = cfg.lr_at(epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        model.train()
        perm = torch.randperm(n_train, generator=shuffle).tolist()
        total, count = 0.0, 0
        for b, start in enumerate(range(0, n_train, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            optimizer.zero_grad(set_to_none=True)
            loss, n = batch_loss(idx)
            if not torch.isfinite(loss):
                raise NumericError(f"non-finite loss {loss.item()} at epoch {epoch}, batch {b} (items {idx[:8]}...)")
            loss.backward()
            if cfg.max_grad_norm is not None:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.max_grad_norm)
            optimizer.step()
            state.global_step += 1
            total += loss.item() * n
            count += n
        dev_value = float(dev_metric()) if dev_metric is not None else -total / count
        entry = {
            "epoch": epoch,
            "train_loss": total / count,
            "dev_metric": dev_value,
            "metric": cfg.selection_metric,
            "lr": lr,
            "wallclock_s": time.perf_counter() - t0,
        }
        if _is_better(dev_value, state.best_dev_value, higher):
            state.best_dev_value = dev_value
            state.best_epoch = epoch
            state.best_model_state = copy.deepcopy(model.state_dict())
        state.history.append(entry)
        state.epoch = epoch + 1
        state.current_lr = lr
        state.torch_rng = torch.get_rng_state()
        state.shuffle_rng = shuffle.get_state()
        state.optimizer_state = optimizer.state_dict()
        train_log.epochs.append(entry)
        train_log.best_epoch, train_log.best_dev_value = state.best_epoch, state.best_dev_value
        log.info("epoch %d train_loss %.5f %s %.5f lr %.3g", epoch, entry["train_loss"],
                 cfg.selection_metric, dev_value, lr)
        if log_fh is not None:
            log_fh.write(json.dumps(entry) + "\n")
            log_fh.flush()
        if on_epoch_end is not None:
            on_epoch_end(state, entry)

    if state.best_model_state is not None:
        model.load_state_dict(state.best_model_state)
    return train_log


# ---------------------------------------------------------------------------
# decoder training


def evaluate_dev(
    model,
    records: Sequence[EEGSentenceRecord],
    metric: str = "dev_loss",
    strategy: str = "greedy",
    batch_size: int = 32,
) -> float:
    """Dev-set selection metric: token-weighted mean loss, or corpus BLEU-1."""
    if not records:
        raise ValueError("dev set is empty")
    was_training = model.training
    model.eval()
    try:
        if metric == "dev_loss":
            total, count = 0.0, 0
            with torch.no_grad():
                for start in range(0, len(records), batch_size):
                    batch = model.collate(records[start : start + batch_size])
                    n = int((~batch.pad_mask).sum())
                    total += model(batch).item() * n
                    count += n
            return total / count
        if metric == "dev_bleu1":
            from .metrics import bleu_n, tokenize

            hyps = [tokenize(model.decode_text(r, strategy)) for r in records]
            refs = [tokenize(r.text) for r in records]
            return bleu_n(hyps, refs, max_n=1)[1]
    finally:
        model.train(was_training)
    raise ConfigError(f"metric {metric!r} does not apply to the decoder")


def _provenance(records: Sequence[EEGSentenceRecord]) -> dict:
    return {"kind": "eeg-text", "texts": sorted({text_fingerprint(r.text) for r in records})}


def train_decoder(
    model,
    split: DatasetSplit,
    cfg: TrainConfig,
    *,
    log_path: str | os.PathLike | None = None,
    checkpoint_path: str | os.PathLike | None = None,
    resume: TrainState | None = None,
    on_epoch_end: Callable[[TrainState, dict], None] | None = None,
):
    """Teacher-forced training on EEG-text pairs; returns ``(model, TrainLog)``.

    With ``checkpoint_path`` a checkpoint is written after every epoch, so an
    interrupted run resumes from ``load_checkpoint(...)[1]`` via ``resume``.
    """
    train = list(split.train)
    if not train:
        raise ValueError("training split is empty")
    if not split.dev and cfg.selection_metric != "dev_loss":
        raise ValueError("dev split is empty")
    dims = {r.feature_dim for r in train}
    if dims != {model.config.input_dim}:
        raise ConfigError(f"training feature dims {sorted(dims)} != model input_dim {model.config.input_dim}")

    def batch_loss(idx):
        batch = model.collate([train[i] for i in idx])
        return model(batch), int((~batch.pad_mask).sum())

    def dev_metric():
        if not split.dev:
            return evaluate_dev(model, train, "dev_loss")
        return evaluate_dev(model, split.dev, cfg.selection_metric, cfg.decode_strategy, cfg.batch_size)

    model.provenance = _provenance(split.train + split.dev)

    def epoch_end(state, entry):
        if checkpoint_path is not None:
            save_checkpoint(model, state, checkpoint_path, train_config=cfg)
        if on_epoch_end is not None:
            on_epoch_end(state, entry)

    fh = open(log_path, "a" if resume else "w", encoding="utf-8") if log_path else None
    try:
        train_log = run_epochs(model, len(train), batch_loss, dev_metric, cfg,
                               state=resume, on_epoch_end=epoch_end, log_fh=fh)
    finally:
        if fh is not None:
            fh.close()
    return model, train_log


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model, state: TrainState | None, path, train_config: TrainConfig | None = None) -> None:
    """Write config, parameters, optimiser state and counters to one file, atomically."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "translator_config": model.config.to_dict(),
        "backbone": model.backbone.spec(),
        "model_state": model.state_dict(),
        "train_state": None if state is None else state.to_dict(),
        "train_config": None if train_config is None else train_config.to_dict(),
        "provenance": model.provenance,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        torch.save(payload, tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path, config=None, backbone=None):
    """Rebuild ``(model, TrainState | None)`` from ``save_checkpoint`` output.

    When ``config`` is given it must match the stored translator config;
    this check runs before any parameters are assigned.
    """
    from .backbone import build_backbone
    from .translator import BrainTranslator, TranslatorConfig

    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not an eeg2text checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload.get('version')} unsupported (expected {CHECKPOINT_VERSION})"
        )
    stored = TranslatorConfig(**payload["translator_config"])
    if config is not None:
        want = config.to_dict() if hasattr(config, "to_dict") else dict(config)
        # decoding options do not affect parameters
        skip = {"decode_strategy", "max_target_len", "dropout", "freeze_backbone"}
        diff = {k: (stored.to_dict()[k], v) for k, v in want.items()
                if k not in skip and stored.to_dict().get(k) != v}
        if diff:
            raise CheckpointError(f"checkpoint config incompatible: {diff} (stored, requested)")
        stored = TranslatorConfig(**{**stored.to_dict(), **{k: want[k] for k in skip if k in want}})
    if backbone is None:
        backbone = build_backbone(payload["backbone"])
    model = BrainTranslator(stored, backbone)
    try:
        model.load_state_dict(payload["model_state"])
    except RuntimeError as exc:
        raise CheckpointError(f"parameter shapes do not match config: {exc}") from exc
    model.provenance = payload.get("provenance")
    state = payload.get("train_state")
    return model, None if state is None else TrainState.from_dict(state)


def checkpoint_train_config(path) -> TrainConfig | None:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    cfg = payload.get("train_config")
    return None if cfg is None else TrainConfig(**cfg)
