"""Sequence-to-sequence backbones that accept continuous input embeddings.

A backbone encodes a sequence of hidden-size vectors (the projected EEG) and
decodes target prefixes into hidden states; the translator owns the mapping
to vocabulary logits unless the backbone brings its own language-model head.
"""

from __future__ import annotations

import math
import os
from typing import Protocol, Sequence, runtime_checkable

import torch
from torch import nn

from .errors import ConfigError

CACHE_ENV = "EEG2TEXT_CACHE"


def sinusoidal_positions(length: int, dim: int, dtype=torch.float32, device=None) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float64, device=device).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64, device=device) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, dtype=torch.float64, device=device)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)[:, : dim // 2]
    return pe.to(dtype)


def causal_mask(size: int, device=None) -> torch.Tensor:
    """Boolean mask, True above the diagonal (future positions are blocked)."""
    return torch.triu(torch.ones(size, size, dtype=torch.bool, device=device), diagonal=1)


class WordTokenizer:
    """Whitespace word vocabulary with BART-style special ids."""

    BOS, PAD, EOS, UNK = "<s>", "<pad>", "</s>", "<unk>"
    SPECIALS = (BOS, PAD, EOS, UNK)

    def __init__(self, tokens: Sequence[str]):
        words = [t for t in dict.fromkeys(tokens) if t not in self.SPECIALS]
        self.itos = list(self.SPECIALS) + words
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    @classmethod
    def from_texts(cls, texts: Sequence[str]) -> "WordTokenizer":
        return cls(sorted({w for t in texts for w in t.split()}))

    @property
    def bos_id(self) -> int:
        return 0

    @property
    def pad_id(self) -> int:
        return 1

    @property
    def eos_id(self) -> int:
        return 2

    @property
    def unk_id(self) -> int:
        return 3

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, text: str) -> list[int]:
        return [self.stoi.get(w, self.unk_id) for w in text.split()]

    def decode(self, ids: Sequence[int]) -> str:
        specials = {self.bos_id, self.pad_id, self.eos_id}
        return " ".join(self.itos[i] if 0 <= i < len(self.itos) else self.UNK for i in ids if i not in specials)

    def to_dict(self) -> dict:
        return {"kind": "word", "tokens": self.itos[len(self.SPECIALS):]}

    @classmethod
    def from_dict(cls, d: dict) -> "WordTokenizer":
        return cls(d["tokens"])


@runtime_checkable
class Seq2SeqBackbone(Protocol):
    hidden_size: int
    vocab_size: int
    pretrained: bool
    decoder_start_id: int
    eos_id: int
    pad_id: int

    def encode(self, embeds: torch.Tensor, mask: torch.Tensor) -> torch.Tensor: ...

    def decode(
        self,
        memory: torch.Tensor,
        memory_mask: torch.Tensor,
        prefix: torch.Tensor,
        prefix_mask: torch.Tensor | None = None,
    ) -> torch.Tensor: ...

    def tokenize(self, text: str) -> list[int]:
        """Label ids for ``text``, ending with the end token."""

    def detokenize(self, ids: Sequence[int]) -> str: ...

    def output_head(self) -> nn.Module | None: ...

    def spec(self) -> dict: ...


class ToySeq2Seq(nn.Module):
    """Small randomly initialised encoder-decoder transformer.

    Plays the role of the backbone trained from scratch; fast enough for
    desk-scale experiments and gradient checks.
    """

    pretrained = False

    def __init__(
        self,
        tokenizer: WordTokenizer,
        hidden_size: int = 32,
        layers: int = 2,
        heads: int = 2,
        ff_dim: int = 64,
        dropout: float = 0.0,
        max_positions: int = 512,
    ):
        super().__init__()
        if hidden_size % heads:
            raise ConfigError(f"hidden_size {hidden_size} not divisible by heads {heads}")
        self.tokenizer = tokenizer
        self.hidden_size = hidden_size
        self.vocab_size = len(tokenizer)
        self.decoder_start_id = tokenizer.bos_id
        self.eos_id = tokenizer.eos_id
        self.pad_id = tokenizer.pad_id
        self._hparams = dict(hidden_size=hidden_size, layers=layers, heads=heads, ff_dim=ff_dim, dropout=dropout)

        self.embed_tokens = nn.Embedding(self.vocab_size, hidden_size)
        self.register_buffer("positions", sinusoidal_positions(max_positions, hidden_size), persistent=False)
        enc_layer = nn.TransformerEncoderLayer(
            hidden_size, heads, ff_dim, dropout, batch_first=True, norm_first=True
        )
        self.encoder = nn.TransformerEncoder(
            enc_layer, layers, norm=nn.LayerNorm(hidden_size), enable_nested_tensor=False
        )
        dec_layer = nn.TransformerDecoderLayer(
            hidden_size, heads, ff_dim, dropout, batch_first=True, norm_first=True
        )
        self.decoder = nn.TransformerDecoder(dec_layer, layers, norm=nn.LayerNorm(hidden_size))
        self.embed_scale = math.sqrt(hidden_size)

    def _pos(self, length: int, like: torch.Tensor) -> torch.Tensor:
        if length > self.positions.shape[0]:
            raise ValueError(f"sequence length {length} exceeds max_positions {self.positions.shape[0]}")
        return self.positions[:length].to(dtype=like.dtype)

    def encode(self, embeds, mask):
        x = embeds + self._pos(embeds.shape[1], embeds)
        return self.encoder(x, src_key_padding_mask=~mask)

    def decode(self, memory, memory_mask, prefix, prefix_mask=None):
        T = prefix.shape[1]
        y = self.embed_tokens(prefix) * self.embed_scale
        y = y + self._pos(T, y)
        return self.decoder(
            y,
            memory,
            tgt_mask=causal_mask(T, prefix.device),
            tgt_key_padding_mask=None if prefix_mask is None else ~prefix_mask,
            memory_key_padding_mask=~memory_mask,
        )

    def tokenize(self, text):
        return self.tokenizer.encode(text) + [self.eos_id]

    def detokenize(self, ids):
        return self.tokenizer.decode(ids)

    def output_head(self):
        return None

    def spec(self) -> dict:
        return {"kind": "toy", "tokenizer": self.tokenizer.to_dict(), **self._hparams}


class HFBartBackbone(nn.Module):
    """Adapter over a Hugging Face BART encoder-decoder.

    The projected EEG is passed as ``inputs_embeds`` to the BART encoder, in
    place of token embeddings. The language-model head is the checkpoint's
    own, tied to the shared token embedding.
    """

    def __init__(self, model, tokenizer, pretrained: bool, name: str | None = None):
        super().__init__()
        self.model = model
        self.tokenizer = tokenizer
        self.pretrained = pretrained
        self.name = name
        cfg = model.config
        self.hidden_size = cfg.d_model
        self.vocab_size = cfg.vocab_size
        self.decoder_start_id = cfg.decoder_start_token_id
        self.eos_id = cfg.eos_token_id
        self.pad_id = cfg.pad_token_id
        self._head = _BiasedHead(model.lm_head, model.final_logits_bias)

    @classmethod
    def from_pretrained(cls, name: str = "facebook/bart-large", cache_dir: str | None = None):
        from transformers import BartForConditionalGeneration, BartTokenizer

        cache_dir = cache_dir or os.environ.get(CACHE_ENV)
        model = BartForConditionalGeneration.from_pretrained(name, cache_dir=cache_dir)
        tokenizer = BartTokenizer.from_pretrained(name, cache_dir=cache_dir)
        return cls(model, tokenizer, pretrained=True, name=name)

    @classmethod
    def from_config(cls, config: dict, tokenizer, name: str | None = None):
        """Randomly initialised BART, for the no-pretrained-weights ablation."""
        from transformers import BartConfig, BartForConditionalGeneration

        model = BartForConditionalGeneration(BartConfig(**config))
        return cls(model, tokenizer, pretrained=False, name=name)

    def encode(self, embeds, mask):
        out = self.model.model.encoder(inputs_embeds=embeds, attention_mask=mask.long())
        return out.last_hidden_state

    def decode(self, memory, memory_mask, prefix, prefix_mask=None):
        out = self.model.model.decoder(
            input_ids=prefix,
            attention_mask=None if prefix_mask is None else prefix_mask.long(),
            encoder_hidden_states=memory,
            encoder_attention_mask=memory_mask.long(),
        )
        return out.last_hidden_state

    def tokenize(self, text):
        if isinstance(self.tokenizer, WordTokenizer):
            return [self.tokenizer.bos_id] + self.tokenizer.encode(text) + [self.eos_id]
        return list(self.tokenizer(text)["input_ids"])

    def detokenize(self, ids):
        if isinstance(self.tokenizer, WordTokenizer):
            return self.tokenizer.decode(ids)
        return self.tokenizer.decode(list(ids), skip_special_tokens=True).strip()

    def output_head(self):
        return self._head

    def spec(self) -> dict:
        if isinstance(self.tokenizer, WordTokenizer):
            tok = self.tokenizer.to_dict()
        else:
            tok = {"kind": "hf", "name": self.tokenizer.name_or_path}
        return {
            "kind": "bart",
            "name": self.name,
            "pretrained": self.pretrained,
            "config": self.model.config.to_diff_dict(),
            "tokenizer": tok,
        }


class _BiasedHead(nn.Module):
    def __init__(self, linear: nn.Linear, bias: torch.Tensor):
        super().__init__()
        self.linear = linear
        # BART keeps its logits bias as a non-trainable buffer
        self.register_buffer("bias", bias, persistent=False)

    def forward(self, h):
        return self.linear(h) + self.bias.to(h.dtype)


def _tokenizer_from_dict(d: dict):
    if d["kind"] == "word":
        return WordTokenizer.from_dict(d)
    if d["kind"] == "hf":
        from transformers import AutoTokenizer

        return AutoTokenizer.from_pretrained(d["name"], cache_dir=os.environ.get(CACHE_ENV))
    raise ConfigError(f"unknown tokenizer kind {d['kind']!r}")


def build_backbone(spec: dict, tokenizer=None):
    """Rebuild a backbone from ``spec()`` output or a config-file block.

    Weights come from the checkpoint when reloading, so a BART backbone is
    rebuilt from its config without downloading.
    """
    spec = dict(spec)
    kind = spec.pop("kind", "toy")
    if tokenizer is None and "tokenizer" in spec:
        tokenizer = _tokenizer_from_dict(spec["tokenizer"])
    spec.pop("tokenizer", None)
    if kind == "toy":
        if tokenizer is None:
            raise ConfigError("toy backbone needs a tokenizer")
        return ToySeq2Seq(tokenizer, **spec)
    if kind == "bart":
        if "config" in spec:
            backbone = HFBartBackbone.from_config(spec["config"], tokenizer, name=spec.get("name"))
            backbone.pretrained = bool(spec.get("pretrained", False))
            return backbone
        return HFBartBackbone.from_pretrained(spec.get("name", "facebook/bart-large"))
    raise ConfigError(f"unknown backbone kind {kind!r}")
