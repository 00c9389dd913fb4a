"""Turn raw note text into timestamped embeddings for downstream risk
models: a small encoder, a bottleneck classification head fine-tuned on
future-event labels, and JSONL export of the head's hidden activations."""

from .data import NoteRecord, load_notes_csv, write_notes_csv
from .encoder import HashTokenizer, TinyTextEncoder, make_encoder
from .errors import InputError, Notes2VecError, SingleClass
from .export import embed_notes, export_embeddings
from .head import ClassifierHead, HeadSpec, build_head
from .training import (
    FineTuneResult,
    NoteClassifier,
    OptimizerSettings,
    fine_tune,
    load_checkpoint,
    save_checkpoint,
)

__version__ = "0.1.0"
