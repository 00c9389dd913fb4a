"""File interchange formats.

Long-format episode CSV (one row per epoch), JSON schema sidecar, JSONL
embedding streams, raw observation CSV, and the versioned model document.
Floats are written with ``repr`` so every round trip is bit-exact for
finite values, and missing values stay missing (empty CSV fields).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from typing import Iterable

import numpy as np

from .boosting import HazardEnsemble, TreeNode
from .data import DatasetSchema, Epoch, Episode
from .errors import InputError, SchemaMismatch
from .fusion import EmbeddingStream, RawObservationStream
from .simulate import (
    ConstantHazard,
    EmbeddingChannelSpec,
    FeatureSpec,
    FeatureStepHazard,
    ProductHazard,
    ScenarioSpec,
    TimeStepHazard,
)

MODEL_FORMAT = "hazardforge-model-v1"
_EPOCH_COLUMNS = ("subject_id", "episode_id", "t_start", "t_end", "delta")
_CENSOR_COLUMN = "censored_admin"


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def write_episodes_csv(path, episodes: Iterable[Episode], schema: DatasetSchema) -> None:
    """One row per epoch: subject, episode, bounds, delta, features.

    A trailing ``censored_admin`` column keeps the episode metadata through
    round trips; readers that only know the feature columns can ignore it.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_EPOCH_COLUMNS + schema.feature_names + (_CENSOR_COLUMN,))
        for episode in episodes:
            flag = "1" if episode.censored_admin else "0"
            for ep in episode.epochs:
                writer.writerow(
                    [
                        episode.subject_id,
                        episode.episode_id,
                        repr(ep.t_start),
                        repr(ep.t_end),
                        str(ep.delta),
                        *(_fmt(v) for v in ep.covariates),
                        flag,
                    ]
                )


def read_episodes_csv(path, schema: DatasetSchema) -> list[Episode]:
    """Parse a long-format CSV; feature columns must match the schema order."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: missing header row") from None
        expected = list(_EPOCH_COLUMNS + schema.feature_names)
        has_censor = header == expected + [_CENSOR_COLUMN]
        if not has_censor and header != expected:
            raise SchemaMismatch(f"{path}: header does not match the schema columns")
        order: list[str] = []
        rows: dict[str, list] = {}
        subjects: dict[str, str] = {}
        censored: dict[str, bool] = {}
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise InputError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            subject_id, episode_id = row[0], row[1]
            values = [math.nan if cell == "" else float(cell) for cell in row[5 : 5 + schema.width]]
            epoch = Epoch(float(row[2]), float(row[3]), np.array(values), int(row[4]))
            if episode_id not in rows:
                order.append(episode_id)
                rows[episode_id] = []
                subjects[episode_id] = subject_id
                censored[episode_id] = bool(int(row[-1])) if has_censor else False
            elif subjects[episode_id] != subject_id:
                raise InputError(f"{path}:{line}: episode {episode_id!r} changes subject")
            rows[episode_id].append(epoch)
    return [
        Episode(episode_id, subjects[episode_id], tuple(rows[episode_id]), censored[episode_id])
        for episode_id in order
    ]


def write_schema_json(path, schema: DatasetSchema) -> None:
    doc = {
        "feature_names": list(schema.feature_names),
        "feature_kinds": list(schema.feature_kinds),
        "monitoring_start": schema.monitoring_start,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_schema_json(path) -> DatasetSchema:
    with open(path) as fh:
        doc = json.load(fh)
    try:
        return DatasetSchema(
            tuple(doc["feature_names"]),
            tuple(doc["feature_kinds"]),
            float(doc.get("monitoring_start", 24.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaMismatch(f"{path}: invalid schema document: {exc}") from exc


def write_embeddings_jsonl(path, streams: Iterable[EmbeddingStream]) -> None:
    """One JSON object per note: {"episode_id", "timestamp_hours", "embedding"}."""
    with open(path, "w") as fh:
        for stream in streams:
            for t, vec in zip(stream.times, stream.vectors):
                fh.write(
                    json.dumps(
                        {
                            "episode_id": stream.episode_id,
                            "timestamp_hours": float(t),
                            "embedding": [float(v) for v in vec],
                        },
                        sort_keys=True,
                    )
                )
                fh.write("\n")


def read_embeddings_jsonl(path) -> dict[str, EmbeddingStream]:
    entries: dict[str, list[tuple[float, list[float]]]] = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                episode_id = str(doc["episode_id"])
                t = float(doc["timestamp_hours"])
                vec = [float(v) for v in doc["embedding"]]
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise InputError(f"{path}:{line_no}: bad embedding record: {exc}") from exc
            entries.setdefault(episode_id, []).append((t, vec))
    streams = {}
    for episode_id, items in entries.items():
        items.sort(key=lambda pair: pair[0])
        times = np.array([t for t, _ in items])
        vectors = np.array([v for _, v in items])
        widths = {len(v) for _, v in items}
        if len(widths) != 1:
            raise SchemaMismatch(f"{path}: episode {episode_id!r} mixes embedding widths")
        streams[episode_id] = EmbeddingStream(episode_id, times, vectors)
    return streams


def read_raw_observations_csv(path) -> list[RawObservationStream]:
    """Parse `subject_id,episode_id,timestamp,feature,value` rows into streams."""
    grouped: dict[str, list[tuple[float, str, object]]] = {}
    subjects: dict[str, str] = {}
    order: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["subject_id", "episode_id", "timestamp", "feature", "value"]:
            raise SchemaMismatch(f"{path}: unexpected raw observation header")
        for line, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise InputError(f"{path}:{line}: expected 5 fields")
            subject_id, episode_id, t, feature, value = row
            try:
                parsed: object = float(value)
            except ValueError:
                parsed = value
            if episode_id not in grouped:
                grouped[episode_id] = []
                subjects[episode_id] = subject_id
                order.append(episode_id)
            grouped[episode_id].append((float(t), feature, parsed))
    streams = []
    for episode_id in order:
        entries = sorted(grouped[episode_id], key=lambda e: e[0])
        streams.append(RawObservationStream(episode_id, tuple(entries), subjects[episode_id]))
    return streams


def read_events_csv(path) -> dict[str, list[float]]:
    """Parse `episode_id,event_time` rows into per-episode sorted event times."""
    events: dict[str, list[float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["episode_id", "event_time"]:
            raise SchemaMismatch(f"{path}: unexpected events header")
        for row in reader:
            events.setdefault(row[0], []).append(float(row[1]))
    return {k: sorted(v) for k, v in events.items()}


def _tree_to_doc(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"value": node.value}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "missing_left": node.missing_left,
        "gain": node.gain,
        "left": _tree_to_doc(node.left),
        "right": _tree_to_doc(node.right),
    }


def _tree_from_doc(doc: dict) -> TreeNode:
    if "value" in doc:
        return TreeNode.leaf(doc["value"])
    return TreeNode.split(
        doc["feature"],
        doc["threshold"],
        doc["missing_left"],
        doc["gain"],
        _tree_from_doc(doc["left"]),
        _tree_from_doc(doc["right"]),
    )


def model_to_json(model: HazardEnsemble) -> str:
    doc = {
        "version": MODEL_FORMAT,
        "f0": model.f0,
        "nu": model.nu,
        "schema": {
            "feature_names": list(model.schema.feature_names),
            "feature_kinds": list(model.schema.feature_kinds),
            "monitoring_start": model.schema.monitoring_start,
        },
        "trees": [_tree_to_doc(t) for t in model.trees],
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def write_model_json(path, model: HazardEnsemble) -> None:
    with open(path, "w") as fh:
        fh.write(model_to_json(model))
        fh.write("\n")


def read_model_json(path) -> HazardEnsemble:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != MODEL_FORMAT:
        raise SchemaMismatch(f"{path}: expected a {MODEL_FORMAT} document")
    schema = DatasetSchema(
        tuple(doc["schema"]["feature_names"]),
        tuple(doc["schema"]["feature_kinds"]),
        float(doc["schema"]["monitoring_start"]),
    )
    trees = [_tree_from_doc(t) for t in doc["trees"]]
    return HazardEnsemble.from_trees(doc["f0"], doc["nu"], trees, schema)


def file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


# --- scenario documents -----------------------------------------------------

_HAZARD_FORMS = {
    "constant": ConstantHazard,
    "feature_step": FeatureStepHazard,
    "time_step": TimeStepHazard,
}


def hazard_from_dict(doc: dict):
    form = doc.get("form")
    if form == "product":
        return ProductHazard(tuple(hazard_from_dict(t) for t in doc["terms"]))
    if form not in _HAZARD_FORMS:
        raise InputError(f"unknown hazard form {form!r}")
    kwargs = {k: v for k, v in doc.items() if k != "form"}
    return _HAZARD_FORMS[form](**kwargs)


def scenario_from_dict(doc: dict) -> ScenarioSpec:
    features = tuple(
        FeatureSpec(
            name=f["name"],
            init=tuple(f.get("init", ("constant", 0.0))),
            refresh_rate=float(f.get("refresh_rate", 0.0)),
            redraw=tuple(f["redraw"]) if "redraw" in f else None,
            onset_rate=float(f["onset_rate"]) if "onset_rate" in f else None,
            observed=bool(f.get("observed", True)),
        )
        for f in doc.get("features", [])
    )
    embedding = None
    if "embedding" in doc and doc["embedding"] is not None:
        e = doc["embedding"]
        embedding = EmbeddingChannelSpec(
            source=e["source"],
            dim=int(e.get("dim", 2)),
            rate=float(e.get("rate", 0.25)),
            noise_sd=float(e.get("noise_sd", 0.1)),
            loading=tuple(e["loading"]) if "loading" in e else None,
        )
    return ScenarioSpec(
        hazard=hazard_from_dict(doc["hazard"]),
        features=features,
        lambda_max=float(doc.get("lambda_max", 1.0)),
        n_episodes=int(doc.get("n_episodes", 100)),
        max_follow_up=float(doc.get("max_follow_up", 48.0)),
        censor_rate=float(doc.get("censor_rate", 0.0)),
        monitoring_start=float(doc.get("monitoring_start", 24.0)),
        prevalence_target=doc.get("prevalence_target"),
        embedding=embedding,
        seed=int(doc.get("seed", 0)),
    )


def read_scenario_json(path) -> ScenarioSpec:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from exc
    return scenario_from_dict(doc)


def hazard_to_dict(hazard) -> dict:
    if isinstance(hazard, ProductHazard):
        return {"form": "product", "terms": [hazard_to_dict(t) for t in hazard.terms]}
    for form, cls in _HAZARD_FORMS.items():
        if isinstance(hazard, cls):
            doc = {"form": form}
            doc.update(vars(hazard))
            return doc
    raise InputError(f"cannot serialize hazard {hazard!r}")


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    doc = {
        "hazard": hazard_to_dict(spec.hazard),
        "features": [
            {
                "name": f.name,
                "init": list(f.init),
                "refresh_rate": f.refresh_rate,
                **({"redraw": list(f.redraw)} if f.redraw is not None else {}),
                **({"onset_rate": f.onset_rate} if f.onset_rate is not None else {}),
                "observed": f.observed,
            }
            for f in spec.features
        ],
        "lambda_max": spec.lambda_max,
        "n_episodes": spec.n_episodes,
        "max_follow_up": spec.max_follow_up,
        "censor_rate": spec.censor_rate,
        "monitoring_start": spec.monitoring_start,
        "prevalence_target": spec.prevalence_target,
        "seed": spec.seed,
    }
    if spec.embedding is not None:
        doc["embedding"] = {
            "source": spec.embedding.source,
            "dim": spec.embedding.dim,
            "rate": spec.embedding.rate,
            "noise_sd": spec.embedding.noise_sd,
            **({"loading": list(spec.embedding.loading)} if spec.embedding.loading is not None else {}),
        }
    return doc
