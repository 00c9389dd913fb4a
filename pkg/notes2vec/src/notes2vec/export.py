"""Embedding export in the pipeline interchange format.

One JSON object per note: {"episode_id", "timestamp_hours", "embedding"},
where the embedding is the head's n-wide hidden activation with dropout
disabled, so repeated runs produce identical vectors.
"""

from __future__ import annotations

import json
from typing import Sequence

import torch

from .data import NoteRecord
from .encoder import HashTokenizer
from .training import NoteClassifier


def embed_notes(
    model: NoteClassifier,
    notes: Sequence[NoteRecord],
    batch_size: int = 64,
    max_tokens: int = 512,
) -> list[list[float]]:
    tokenizer = HashTokenizer(model.encoder.vocab_size)
    model.eval()
    vectors = []
    with torch.no_grad():
        for lo in range(0, len(notes), batch_size):
            chunk = notes[lo : lo + batch_size]
            ids, mask = tokenizer.batch([n.text for n in chunk], max_tokens)
            embedding, _ = model(ids, mask)
            vectors.extend(row.tolist() for row in embedding)
    return vectors


def export_embeddings(
    model: NoteClassifier,
    notes: Sequence[NoteRecord],
    path,
    batch_size: int = 64,
    max_tokens: int = 512,
) -> None:
    """Write the interchange JSONL, notes ordered by (episode, timestamp)."""
    ordered = sorted(notes, key=lambda n: (n.episode_id, n.timestamp))
    vectors = embed_notes(model, ordered, batch_size, max_tokens)
    with open(path, "w") as fh:
        for note, vec in zip(ordered, vectors):
            fh.write(
                json.dumps(
                    {
                        "episode_id": note.episode_id,
                        "timestamp_hours": note.timestamp,
                        "embedding": [float(v) for v in vec],
                    },
                    sort_keys=True,
                )
            )
            fh.write("\n")
