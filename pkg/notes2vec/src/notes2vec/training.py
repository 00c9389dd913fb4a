"""Two-phase fine-tuning on future-event labels.

Phase one freezes the encoder and trains only the classifier head, letting
it adapt without disturbing pretrained weights; phase two unfreezes the
encoder and trains both jointly.  Within each phase the checkpoint with
the lowest validation loss wins.  Loss is binary cross-entropy with
logits on the head's single output.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Sequence

import torch
from torch import nn

from .data import NoteRecord
from .encoder import MAX_TOKENS, HashTokenizer
from .errors import SingleClass
from .head import ClassifierHead, HeadSpec, build_head


@dataclass(frozen=True)
class OptimizerSettings:
    """Defaults follow the usual fine-tuning recipe; all are CLI flags."""

    learning_rate: float = 1e-3
    weight_decay: float = 0.1
    batch_size: int = 64
    cosine_cycles: int = 8


class NoteClassifier(nn.Module):
    def __init__(self, encoder: nn.Module, head: ClassifierHead):
        super().__init__()
        self.encoder = encoder
        self.head = head

    def forward(self, ids, mask):
        pooled = self.encoder(ids, mask)
        return self.head(pooled)


@dataclass
class FineTuneResult:
    model: NoteClassifier
    history: dict = field(default_factory=dict)
    best_val_loss: float = math.inf
    val_accuracy: float = 0.0


def _epoch_losses(model, ids, mask, labels, batch_size):
    model.eval()
    total, correct = 0.0, 0
    with torch.no_grad():
        for lo in range(0, ids.shape[0], batch_size):
            sl = slice(lo, lo + batch_size)
            _, logits = model(ids[sl], mask[sl])
            total += nn.functional.binary_cross_entropy_with_logits(
                logits, labels[sl], reduction="sum"
            ).item()
            correct += int(((logits > 0) == (labels[sl] > 0.5)).sum())
    return total / ids.shape[0], correct / ids.shape[0]


def _run_phase(model, parameters, ids, mask, labels, val, epochs, settings, generator):
    optimizer = torch.optim.AdamW(
        parameters, lr=settings.learning_rate, weight_decay=settings.weight_decay
    )
    steps_per_epoch = max(1, math.ceil(ids.shape[0] / settings.batch_size))
    total_steps = max(1, epochs * steps_per_epoch)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingWarmRestarts(
        optimizer, T_0=max(1, total_steps // settings.cosine_cycles)
    )
    val_ids, val_mask, val_labels = val
    log = []
    best_loss, best_state = math.inf, None
    for _ in range(epochs):
        model.train()
        order = torch.randperm(ids.shape[0], generator=generator)
        running = 0.0
        for lo in range(0, ids.shape[0], settings.batch_size):
            batch = order[lo : lo + settings.batch_size]
            optimizer.zero_grad()
            _, logits = model(ids[batch], mask[batch])
            loss = nn.functional.binary_cross_entropy_with_logits(logits, labels[batch])
            loss.backward()
            optimizer.step()
            scheduler.step()
            running += loss.item() * batch.shape[0]
        val_loss, _ = _epoch_losses(model, val_ids, val_mask, val_labels, settings.batch_size)
        log.append({"train_loss": running / ids.shape[0], "val_loss": val_loss})
        if val_loss < best_loss:
            best_loss = val_loss
            best_state = copy.deepcopy(model.state_dict())
    if best_state is not None:
        model.load_state_dict(best_state)
    return log, best_loss


def fine_tune(
    notes: Sequence[NoteRecord],
    spec: HeadSpec,
    encoder: nn.Module,
    phase1_epochs: int = 8,
    phase2_epochs: int = 16,
    split: float = 0.8,
    settings: OptimizerSettings = OptimizerSettings(),
    seed: int = 0,
    tokenizer: HashTokenizer | None = None,
    max_tokens: int = MAX_TOKENS,
) -> FineTuneResult:
    """Fine-tune encoder + head on note labels; returns the best checkpoint.

    Raises ``SingleClass`` when the training split lacks one of the labels.
    """
    if spec.input_dim != encoder.hidden_size:
        raise ValueError(
            f"head input_dim {spec.input_dim} != encoder hidden size {encoder.hidden_size}"
        )
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed + 1)
    tokenizer = tokenizer or HashTokenizer()

    ids, mask = tokenizer.batch([n.text for n in notes], max_tokens)
    labels = torch.tensor([float(n.label) for n in notes])
    order = torch.randperm(len(notes), generator=torch.Generator().manual_seed(seed))
    n_train = int(round(split * len(notes)))
    train_idx, val_idx = order[:n_train], order[n_train:]
    train_labels = labels[train_idx]
    if train_labels.min() == train_labels.max():
        raise SingleClass("training split holds a single label; cannot fit a classifier")

    model = NoteClassifier(encoder, build_head(spec))
    train = (ids[train_idx], mask[train_idx], train_labels)
    val = (ids[val_idx], mask[val_idx], labels[val_idx])

    for p in model.encoder.parameters():
        p.requires_grad_(False)
    phase1, loss1 = _run_phase(
        model, model.head.parameters(), *train, val, phase1_epochs, settings, generator
    )
    for p in model.encoder.parameters():
        p.requires_grad_(True)
    phase2, loss2 = _run_phase(
        model, model.parameters(), *train, val, phase2_epochs, settings, generator
    )

    best = min(loss1, loss2)
    _, accuracy = _epoch_losses(model, *val, settings.batch_size)
    return FineTuneResult(
        model=model,
        history={"phase1": phase1, "phase2": phase2},
        best_val_loss=best,
        val_accuracy=accuracy,
    )


def save_checkpoint(path, result: FineTuneResult, spec: HeadSpec, max_tokens: int = MAX_TOKENS):
    torch.save(
        {
            "head_spec": {"input_dim": spec.input_dim, "n": spec.n, "dropout_rate": spec.dropout_rate},
            "encoder_config": result.model.encoder.config(),
            "state_dict": result.model.state_dict(),
            "max_tokens": max_tokens,
            "history": result.history,
            "best_val_loss": result.best_val_loss,
            "val_accuracy": result.val_accuracy,
        },
        path,
    )


def load_checkpoint(path) -> tuple[NoteClassifier, HeadSpec, int]:
    from .encoder import encoder_from_config

    doc = torch.load(path, weights_only=False)
    spec = HeadSpec(**doc["head_spec"])
    model = NoteClassifier(encoder_from_config(doc["encoder_config"]), build_head(spec))
    model.load_state_dict(doc["state_dict"])
    model.eval()
    return model, spec, int(doc.get("max_tokens", MAX_TOKENS))
