"""Classification head that doubles as the embedding bottleneck.

The head maps an encoder vector to a single logit through two hidden
layers.  The second hidden layer, of width ``n``, is the exported note
embedding; the first has width ceil(sqrt(input_dim * n)) so the reduction
happens in two roughly equal stages.  Each hidden layer is followed by a
rectifier and dropout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn


@dataclass(frozen=True)
class HeadSpec:
    input_dim: int
    n: int
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.input_dim < 1 or self.n < 1:
            raise ValueError("input_dim and n must be >= 1")

    @property
    def hidden1(self) -> int:
        return math.ceil(math.sqrt(self.input_dim * self.n))


class ClassifierHead(nn.Module):
    """input_dim -> hidden1 -> n -> 1, with ReLU + dropout after each hidden layer."""

    def __init__(self, spec: HeadSpec):
        super().__init__()
        self.spec = spec
        self.fc1 = nn.Linear(spec.input_dim, spec.hidden1)
        self.fc2 = nn.Linear(spec.hidden1, spec.n)
        self.out = nn.Linear(spec.n, 1)
        self.activation = nn.ReLU()
        self.dropout = nn.Dropout(spec.dropout_rate)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (embedding, logit); the embedding is the n-wide activation."""
        h1 = self.dropout(self.activation(self.fc1(x)))
        embedding = self.activation(self.fc2(h1))
        logit = self.out(self.dropout(embedding)).squeeze(-1)
        return embedding, logit


def build_head(spec: HeadSpec) -> ClassifierHead:
    return ClassifierHead(spec)
