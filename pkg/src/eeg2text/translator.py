"""EEG-to-text translator: transformer encoder over raw EEG features, a ReLU
projection into the backbone's embedding space, the backbone, and a
language-model head.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .backbone import Seq2SeqBackbone, sinusoidal_positions
from .data import EEGSentenceRecord
from .errors import ConfigError, DataError, NumericError


@dataclass
class TranslatorConfig:
    input_dim: int = 840
    backbone_hidden: int = 1024
    mte_layers: int = 6
    mte_heads: int = 8
    mte_ff_dim: int = 2048
    vocab_size: int = 50265
    max_target_len: int = 56
    decode_strategy: str = "beam:5"
    dropout: float = 0.1
    freeze_backbone: bool = False
    max_positions: int = 512

    def __post_init__(self):
        for name in ("input_dim", "backbone_hidden", "mte_heads", "mte_ff_dim", "vocab_size", "max_target_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.mte_layers < 0:
            raise ConfigError("mte_layers must be >= 0 (0 disables the encoder)")
        if self.input_dim % self.mte_heads:
            raise ConfigError(f"input_dim {self.input_dim} not divisible by mte_heads {self.mte_heads}")
        parse_strategy(self.decode_strategy)

    def to_dict(self) -> dict:
        return asdict(self)


_BEAM = re.compile(r"^beam[:(](\d+)\)?$")


def parse_strategy(strategy: str) -> tuple[str, int]:
    """'greedy' -> ('greedy', 1); 'beam:5' or 'beam(5)' -> ('beam', 5)."""
    if strategy == "greedy":
        return "greedy", 1
    m = _BEAM.match(strategy)
    if m and int(m.group(1)) >= 1:
        return "beam", int(m.group(1))
    raise ConfigError(f"unknown decode strategy {strategy!r}")


@dataclass
class Batch:
    eeg: torch.Tensor  # (B, L, D)
    eeg_mask: torch.Tensor  # (B, L) True at real positions
    prefix: torch.Tensor  # (B, T) decoder inputs, start token first
    targets: torch.Tensor  # (B, T)
    pad_mask: torch.Tensor  # (B, T) True at padding

    def __len__(self):
        return self.eeg.shape[0]


@dataclass
class Generation:
    ids: list[int]
    text: str
    truncated: bool
    score: float = 0.0


@dataclass
class ParameterCounts:
    counts: dict[str, int]
    trainable: dict[str, bool] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __getitem__(self, key):
        return self.counts[key]


class BrainTranslator(nn.Module):
    def __init__(self, config: TranslatorConfig, backbone: Seq2SeqBackbone):
        super().__init__()
        if backbone.hidden_size != config.backbone_hidden:
            raise ConfigError(
                f"backbone hidden size {backbone.hidden_size} != config.backbone_hidden {config.backbone_hidden}"
            )
        if backbone.vocab_size != config.vocab_size:
            raise ConfigError(f"backbone vocab {backbone.vocab_size} != config.vocab_size {config.vocab_size}")
        self.config = config
        self.provenance: dict | None = None
        if config.mte_layers > 0:
            layer = nn.TransformerEncoderLayer(
                config.input_dim,
                config.mte_heads,
                config.mte_ff_dim,
                config.dropout,
                batch_first=True,
                norm_first=True,
            )
            self.mte = nn.TransformerEncoder(
                layer, config.mte_layers, norm=nn.LayerNorm(config.input_dim), enable_nested_tensor=False
            )
            self.register_buffer(
                "positions", sinusoidal_positions(config.max_positions, config.input_dim), persistent=False
            )
        else:
            self.mte = None
        self.projection = nn.Linear(config.input_dim, config.backbone_hidden)
        self.backbone = backbone
        head = backbone.output_head()
        # a pretrained backbone's own head is reused, so the weights exist once
        self.lm_head = head if head is not None else nn.Linear(config.backbone_hidden, config.vocab_size)
        self.set_backbone_frozen(config.freeze_backbone)

    def set_backbone_frozen(self, frozen: bool) -> None:
        self.config.freeze_backbone = frozen
        for p in self.backbone.parameters():
            p.requires_grad_(not frozen)

    @property
    def dtype(self):
        return self.projection.weight.dtype

    @property
    def device(self):
        return self.projection.weight.device

    # -- forward pieces ---------------------------------------------------

    def project(self, eeg: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        if eeg.shape[-1] != self.config.input_dim:
            raise ValueError(f"EEG feature dim {eeg.shape[-1]} != input_dim {self.config.input_dim}")
        if eeg.shape[:-1] != mask.shape:
            raise ValueError(f"mask shape {tuple(mask.shape)} does not match EEG shape {tuple(eeg.shape)}")
        if eeg.shape[1] < 1:
            raise ValueError("EEG sequence must have at least one word")
        if not torch.isfinite(eeg).all():
            raise NumericError("EEG input contains NaN or infinity")
        h = eeg
        if self.mte is not None:
            L = eeg.shape[1]
            if L > self.positions.shape[0]:
                raise ValueError(f"EEG length {L} exceeds max_positions")
            h = self.mte(h + self.positions[:L].to(h.dtype), src_key_padding_mask=~mask)
        return F.relu(self.projection(h))

    def logits(self, eeg, mask, prefix, prefix_mask=None) -> torch.Tensor:
        if (prefix >= self.config.vocab_size).any() or (prefix < 0).any():
            raise ValueError(f"token id outside [0, {self.config.vocab_size})")
        if (prefix[:, 0] != self.backbone.decoder_start_id).any():
            raise ValueError("target prefix must begin with the decoder start token")
        h_m = self.project(eeg, mask)
        memory = self.backbone.encode(h_m, mask)
        hidden = self.backbone.decode(memory, mask, prefix, prefix_mask)
        return self.lm_head(hidden)

    def forward(self, batch: Batch) -> torch.Tensor:
        logits = self.logits(batch.eeg, batch.eeg_mask, batch.prefix, ~batch.pad_mask)
        return reconstruction_loss(logits, batch.targets, batch.pad_mask)

    # -- data plumbing ----------------------------------------------------

    def collate(self, records: Sequence[EEGSentenceRecord]) -> Batch:
        """Right-pad EEG with zero vectors and targets with the pad id."""
        bb = self.backbone
        B = len(records)
        L = max(len(r) for r in records)
        eeg = torch.zeros(B, L, self.config.input_dim, dtype=self.dtype)
        eeg_mask = torch.zeros(B, L, dtype=torch.bool)
        labels = [bb.tokenize(r.text)[: self.config.max_target_len] for r in records]
        T = max(len(t) for t in labels)
        prefix = torch.full((B, T), bb.pad_id, dtype=torch.long)
        targets = torch.full((B, T), bb.pad_id, dtype=torch.long)
        pad_mask = torch.ones(B, T, dtype=torch.bool)
        for i, (r, lab) in enumerate(zip(records, labels)):
            if r.feature_dim != self.config.input_dim:
                raise DataError(
                    f"record {r.sentence_id!r} has feature dim {r.feature_dim}, model expects {self.config.input_dim}"
                )
            eeg[i, : len(r)] = torch.from_numpy(r.eeg).to(self.dtype)
            eeg_mask[i, : len(r)] = True
            n = len(lab)
            targets[i, :n] = torch.tensor(lab)
            prefix[i, 0] = bb.decoder_start_id
            prefix[i, 1:n] = torch.tensor(lab[:-1])
            pad_mask[i, :n] = False
        return Batch(eeg.to(self.device), eeg_mask.to(self.device), prefix.to(self.device),
                     targets.to(self.device), pad_mask.to(self.device))

    def decode_text(self, record: EEGSentenceRecord, strategy: str | None = None) -> str:
        eeg = torch.from_numpy(record.eeg).to(self.dtype)
        return generate(self, eeg, strategy=strategy).text


# ---------------------------------------------------------------------------
# functional surface


def _batched(eeg, mask):
    squeeze = eeg.dim() == 2
    if squeeze:
        eeg = eeg.unsqueeze(0)
        mask = None if mask is None else mask.unsqueeze(0)
    if mask is None:
        mask = torch.ones(eeg.shape[:2], dtype=torch.bool, device=eeg.device)
    return eeg, mask.bool(), squeeze


def forward_projection(model: BrainTranslator, eeg: torch.Tensor, attention_mask: torch.Tensor | None = None):
    """Map ``(L, input_dim)`` or ``(B, L, input_dim)`` EEG to backbone embeddings."""
    eeg, mask, squeeze = _batched(eeg, attention_mask)
    out = model.project(eeg, mask)
    return out[0] if squeeze else out


def compute_logits(model: BrainTranslator, eeg, attention_mask, target_prefix) -> torch.Tensor:
    """Teacher-forced logits, one row per prefix position."""
    eeg, mask, squeeze = _batched(eeg, attention_mask)
    prefix = torch.as_tensor(target_prefix, dtype=torch.long)
    if prefix.dim() == 1:
        prefix = prefix.unsqueeze(0)
    if prefix.shape[1] < 1:
        raise ValueError("target prefix must be non-empty")
    out = model.logits(eeg, mask, prefix)
    return out[0] if squeeze else out


def reconstruction_loss(logits: torch.Tensor, targets: torch.Tensor, pad_mask: torch.Tensor | None = None) -> torch.Tensor:
    """Mean negative log-likelihood of the targets over non-pad positions."""
    targets = torch.as_tensor(targets, dtype=torch.long)
    if logits.shape[:-1] != targets.shape:
        raise ValueError(f"logits {tuple(logits.shape)} and targets {tuple(targets.shape)} disagree")
    if pad_mask is None:
        pad_mask = torch.zeros_like(targets, dtype=torch.bool)
    keep = ~pad_mask.bool()
    if not keep.any():
        raise ValueError("every target position is padding")
    logp = F.log_softmax(logits, dim=-1)
    nll = -logp.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    return nll[keep].mean()


@torch.no_grad()
def generate(model: BrainTranslator, eeg, attention_mask=None, strategy: str | None = None) -> Generation:
    """Decode one EEG sequence. Ties in the argmax go to the lowest token id."""
    kind, k = parse_strategy(strategy or model.config.decode_strategy)
    eeg, mask, _ = _batched(torch.as_tensor(eeg, dtype=model.dtype), attention_mask)
    if eeg.shape[0] != 1:
        raise ValueError("generate takes a single sequence")
    was_training = model.training
    model.eval()
    try:
        memory = model.backbone.encode(model.project(eeg, mask), mask)
        if kind == "greedy":
            ids, truncated, score = _greedy(model, memory, mask)
        else:
            ids, truncated, score = _beam(model, memory, mask, k)
    finally:
        model.train(was_training)
    return Generation(ids=ids, text=model.backbone.detokenize(ids), truncated=truncated, score=score)


def _step_logprobs(model, memory, mask, prefix):
    hidden = model.backbone.decode(memory.expand(prefix.shape[0], -1, -1),
                                   mask.expand(prefix.shape[0], -1), prefix)
    return F.log_softmax(model.lm_head(hidden[:, -1]).double(), dim=-1)


def _greedy(model, memory, mask):
    bb = model.backbone
    prefix = torch.tensor([[bb.decoder_start_id]], device=memory.device)
    ids, score = [], 0.0
    for _ in range(model.config.max_target_len):
        logp = _step_logprobs(model, memory, mask, prefix)[0]
        tok = int(torch.argmax(logp))  # first maximal index
        score += float(logp[tok])
        ids.append(tok)
        if tok == bb.eos_id:
            return ids, False, score / len(ids)
        prefix = torch.cat([prefix, torch.tensor([[tok]], device=prefix.device)], dim=1)
    return ids, True, score / len(ids)


def _beam(model, memory, mask, k):
    """Length-normalised beam search.

    Of the 2k best extensions, those ending in the end token and ranked
    within the top k are finished; the best non-finished k stay alive.
    Stops once k hypotheses are finished. With k = 1 this is greedy search.
    """
    bb = model.backbone
    V = model.config.vocab_size
    alive = [([], 0.0)]  # (ids, summed log prob)
    finished = []  # (normalised score, order, ids, truncated)
    order = 0
    for _ in range(model.config.max_target_len):
        prefix = torch.tensor([[bb.decoder_start_id] + ids for ids, _ in alive], device=memory.device)
        logp = _step_logprobs(model, memory, mask, prefix)
        totals = torch.tensor([s for _, s in alive], dtype=torch.float64).unsqueeze(1) + logp
        flat = totals.flatten()
        n_cand = min(2 * k, flat.numel())
        # stable sort keeps lower (hypothesis, token) index first on ties
        cand = torch.sort(flat, descending=True, stable=True).indices[:n_cand]
        new_alive = []
        for rank, idx in enumerate(cand.tolist()):
            h, tok = divmod(idx, V)
            ids = alive[h][0] + [tok]
            total = float(flat[idx])
            if tok == bb.eos_id:
                if rank < k:
                    finished.append((total / len(ids), order, ids, False))
                    order += 1
            elif len(new_alive) < k:
                new_alive.append((ids, total))
        if len(finished) >= k or not new_alive:
            break
        alive = new_alive
    else:
        for ids, total in alive:
            finished.append((total / len(ids), order, ids, True))
            order += 1
    best = min(finished, key=lambda f: (-f[0], f[1]))
    return best[2], best[3], best[0]


def count_parameters(model: BrainTranslator) -> ParameterCounts:
    """Exact parameter counts per component; shared tensors count once, under lm_head."""
    head_ids = {id(p) for p in model.lm_head.parameters()}
    groups = {
        "mte": list(model.mte.parameters()) if model.mte is not None else [],
        "projection": list(model.projection.parameters()),
        "backbone": [p for p in model.backbone.parameters() if id(p) not in head_ids],
        "lm_head": list(model.lm_head.parameters()),
    }
    counts = {name: sum(p.numel() for p in ps) for name, ps in groups.items()}
    trainable = {name: bool(ps) and all(p.requires_grad for p in ps) for name, ps in groups.items()}
    return ParameterCounts(counts, trainable)


def build_translator(config: TranslatorConfig, backbone, seed: int | None = 312) -> BrainTranslator:
    """Construct with a fixed seed so initial weights are reproducible."""
    if seed is not None:
        torch.manual_seed(seed)
    return BrainTranslator(config, backbone)


def toy_translator(
    tokenizer,
    input_dim: int = 840,
    hidden: int = 32,
    layers: int = 2,
    heads: int = 2,
    ff_dim: int = 64,
    mte_layers: int = 1,
    mte_heads: int = 2,
    mte_ff_dim: int = 128,
    max_target_len: int = 32,
    decode_strategy: str = "greedy",
    dropout: float = 0.0,
    seed: int = 312,
) -> BrainTranslator:
    """Translator over a small randomly initialised backbone."""
    from .backbone import ToySeq2Seq

    torch.manual_seed(seed)
    backbone = ToySeq2Seq(tokenizer, hidden_size=hidden, layers=layers, heads=heads, ff_dim=ff_dim, dropout=dropout)
    config = TranslatorConfig(
        input_dim=input_dim,
        backbone_hidden=hidden,
        mte_layers=mte_layers,
        mte_heads=mte_heads,
        mte_ff_dim=mte_ff_dim,
        vocab_size=len(tokenizer),
        max_target_len=max_target_len,
        decode_strategy=decode_strategy,
        dropout=dropout,
    )
    return BrainTranslator(config, backbone)
