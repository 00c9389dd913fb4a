"""Note records and their CSV interchange.

Labels arrive precomputed (1 iff an event occurs at any later time in the
episode); this package never parses episode event data itself.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .errors import InputError


@dataclass(frozen=True)
class NoteRecord:
    note_id: str
    episode_id: str
    timestamp: float
    text: str
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


NOTES_HEADER = ["note_id", "episode_id", "timestamp", "label", "text"]


def load_notes_csv(path) -> list[NoteRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != NOTES_HEADER:
            raise InputError(f"{path}: expected header {','.join(NOTES_HEADER)}")
        notes = []
        for line, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise InputError(f"{path}:{line}: expected 5 fields")
            notes.append(NoteRecord(row[0], row[1], float(row[2]), row[4], int(row[3])))
    return notes


def write_notes_csv(path, notes) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(NOTES_HEADER)
        for n in notes:
            writer.writerow([n.note_id, n.episode_id, repr(n.timestamp), n.label, n.text])
