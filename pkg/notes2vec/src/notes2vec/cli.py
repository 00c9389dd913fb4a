"""notes2vec command line: `finetune` a checkpoint, `export` embeddings."""

from __future__ import annotations

import argparse
import json
import os
import sys

import torch

from .data import load_notes_csv
from .encoder import make_encoder
from .errors import Notes2VecError
from .export import export_embeddings
from .head import HeadSpec
from .training import OptimizerSettings, fine_tune, load_checkpoint, save_checkpoint


def cmd_finetune(args) -> int:
    notes = load_notes_csv(args.notes)
    if args.encoder.startswith("tiny"):
        torch.manual_seed(args.seed)
        encoder = make_encoder(args.encoder)
    else:
        model, _, _ = load_checkpoint(args.encoder)
        encoder = model.encoder
    spec = HeadSpec(input_dim=encoder.hidden_size, n=args.dim)
    settings = OptimizerSettings(
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        cosine_cycles=args.cycles,
    )
    result = fine_tune(
        notes,
        spec,
        encoder,
        phase1_epochs=args.phase1_epochs,
        phase2_epochs=args.phase2_epochs,
        split=args.split,
        settings=settings,
        seed=args.seed,
    )
    os.makedirs(args.out, exist_ok=True)
    save_checkpoint(os.path.join(args.out, "checkpoint.pt"), result, spec)
    with open(os.path.join(args.out, "training_log.json"), "w") as fh:
        json.dump(
            {
                "history": result.history,
                "best_val_loss": result.best_val_loss,
                "val_accuracy": result.val_accuracy,
                "hidden1": spec.hidden1,
                "dim": spec.n,
                "seed": args.seed,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    print(f"val_loss={result.best_val_loss:.4f} val_accuracy={result.val_accuracy:.3f}")
    return 0


def cmd_export(args) -> int:
    model, _, max_tokens = load_checkpoint(args.checkpoint)
    notes = load_notes_csv(args.notes)
    export_embeddings(model, notes, args.out, max_tokens=max_tokens)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="notes2vec")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("finetune", help="two-phase fine-tuning on labeled notes")
    p.set_defaults(handler=cmd_finetune)
    p.add_argument("--notes", required=True, help="note_id,episode_id,timestamp,label,text CSV")
    p.add_argument("--dim", type=int, default=2, help="embedding width n")
    p.add_argument("--encoder", default="tiny:64", help="'tiny:<hidden>' or a checkpoint path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--phase1-epochs", dest="phase1_epochs", type=int, default=8)
    p.add_argument("--phase2-epochs", dest="phase2_epochs", type=int, default=16)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=0.1)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=64)
    p.add_argument("--cycles", type=int, default=8)

    p = sub.add_parser("export", help="write the embedding JSONL for a note set")
    p.set_defaults(handler=cmd_export)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--notes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not hasattr(args, "handler"):
        build_parser().print_help()
        return 2
    try:
        return args.handler(args)
    except FileNotFoundError as exc:
        print(json.dumps({"error": {"kind": "FileMissing", "message": str(exc)}}), file=sys.stderr)
        return 2
    except Notes2VecError as exc:
        print(
            json.dumps({"error": {"kind": type(exc).__name__, "message": str(exc)}}),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
