import numpy as np
import pytest

from notes2vec.data import NoteRecord

FILLER = (
    "patient stable lines chest tube review portable exam clear cardiac "
    "silhouette unchanged comparison prior lungs effusion noted mild interval"
).split()

KEYWORD = "stridor"


def keyword_corpus(n=600, seed=5, n_episodes=40):
    """Notes whose label is exactly the presence of one keyword."""
    rng = np.random.default_rng(seed)
    notes = []
    for i in range(n):
        words = list(rng.choice(FILLER, size=int(rng.integers(8, 16))))
        positive = i % 2 == 0
        if positive:
            words.insert(int(rng.integers(0, len(words) + 1)), KEYWORD)
        # the (i // n_episodes)-th note of its episode: unique, increasing times
        notes.append(
            NoteRecord(
                note_id=f"n{i}",
                episode_id=f"ep{i % n_episodes:03d}",
                timestamp=float(24 + 0.5 * (i // n_episodes) + 0.01 * (i % n_episodes)),
                text=" ".join(words),
                label=int(positive),
            )
        )
    return notes


@pytest.fixture
def corpus():
    return keyword_corpus()
