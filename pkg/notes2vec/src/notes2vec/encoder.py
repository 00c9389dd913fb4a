"""Desk-scale text encoder with the interface larger checkpoints share.

Tokenization uses a stable hashing trick (no vocabulary files, no Python
``hash`` randomization); sequences are truncated to 512 tokens and a
leading [CLS] token's output represents the whole note.  Any encoder
exposing ``hidden_size`` and ``forward(ids, mask) -> (batch, hidden)``
plugs into the same training and export paths.
"""

from __future__ import annotations

import re
import zlib

import torch
from torch import nn

MAX_TOKENS = 512
PAD_ID = 0
CLS_ID = 1
_RESERVED = 2
_WORDS = re.compile(r"[a-z0-9]+")


class HashTokenizer:
    def __init__(self, vocab_size: int = 4096):
        self.vocab_size = vocab_size

    def encode(self, text: str, max_tokens: int = MAX_TOKENS) -> list[int]:
        ids = [CLS_ID]
        for word in _WORDS.findall(text.lower()):
            if len(ids) >= max_tokens:
                break
            bucket = zlib.crc32(word.encode("utf-8")) % (self.vocab_size - _RESERVED)
            ids.append(bucket + _RESERVED)
        return ids

    def batch(self, texts, max_tokens: int = MAX_TOKENS) -> tuple[torch.Tensor, torch.Tensor]:
        rows = [self.encode(t, max_tokens) for t in texts]
        width = max(len(r) for r in rows)
        ids = torch.full((len(rows), width), PAD_ID, dtype=torch.long)
        mask = torch.zeros((len(rows), width), dtype=torch.bool)
        for i, row in enumerate(rows):
            ids[i, : len(row)] = torch.tensor(row, dtype=torch.long)
            mask[i, : len(row)] = True
        return ids, mask


class TinyTextEncoder(nn.Module):
    """A small transformer encoder pooled at the first token."""

    def __init__(
        self,
        hidden_size: int = 64,
        num_layers: int = 2,
        num_heads: int = 4,
        vocab_size: int = 4096,
        max_tokens: int = MAX_TOKENS,
    ):
        super().__init__()
        self.hidden_size = hidden_size
        self.vocab_size = vocab_size
        self.max_tokens = max_tokens
        self.tokens = nn.Embedding(vocab_size, hidden_size, padding_idx=PAD_ID)
        self.positions = nn.Embedding(max_tokens, hidden_size)
        layer = nn.TransformerEncoderLayer(
            d_model=hidden_size,
            nhead=num_heads,
            dim_feedforward=2 * hidden_size,
            dropout=0.1,
            batch_first=True,
        )
        self.blocks = nn.TransformerEncoder(layer, num_layers=num_layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(hidden_size)

    def config(self) -> dict:
        return {
            "hidden_size": self.hidden_size,
            "num_layers": self.blocks.num_layers,
            "num_heads": self.blocks.layers[0].self_attn.num_heads,
            "vocab_size": self.vocab_size,
            "max_tokens": self.max_tokens,
        }

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        pos = torch.arange(ids.shape[1], device=ids.device)
        x = self.tokens(ids) + self.positions(pos)[None, :, :]
        x = self.blocks(x, src_key_padding_mask=~mask)
        return self.norm(x[:, 0, :])


def make_encoder(spec: str) -> TinyTextEncoder:
    """Builds an encoder from a spec string like 'tiny:64' (hidden size 64)."""
    if spec.startswith("tiny:"):
        return TinyTextEncoder(hidden_size=int(spec.split(":", 1)[1]))
    if spec == "tiny":
        return TinyTextEncoder()
    raise ValueError(f"unknown encoder spec {spec!r}; use 'tiny:<hidden_size>' or a checkpoint path")


def encoder_from_config(config: dict) -> TinyTextEncoder:
    return TinyTextEncoder(**config)
