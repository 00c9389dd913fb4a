import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hazardforge import (
    Epoch,
    Episode,
    event_count,
    total_exposure,
    validate_episode,
)
from hazardforge.io import read_episodes_csv, read_schema_json, write_episodes_csv, write_schema_json

from conftest import make_episode, make_schema


SCHEMA1 = make_schema(["hr"])


class TestValidateEpisode:
    def test_well_formed(self):
        ep = make_episode([(24, 26, [1.0], 0), (26, 30, [2.0], 1)])
        assert validate_episode(ep, SCHEMA1) == []

    def test_overlap_reported_at_second_epoch(self):
        ep = make_episode([(24, 26, [1.0], 0), (25, 30, [2.0], 0)])
        violations = validate_episode(ep, SCHEMA1)
        assert [(v.kind, v.index) for v in violations] == [("overlap", 1)]

    def test_zero_length_interval(self):
        ep = make_episode([(26, 26, [1.0], 0)])
        assert [v.kind for v in validate_episode(ep, SCHEMA1)] == ["empty_interval"]

    def test_gap_is_allowed(self):
        ep = make_episode([(24, 26, [1.0], 0), (28, 30, [1.0], 0)])
        assert validate_episode(ep, SCHEMA1) == []

    def test_before_monitoring_start(self):
        ep = make_episode([(20, 26, [1.0], 0)])
        assert [v.kind for v in validate_episode(ep, SCHEMA1)] == ["before_monitoring_start"]

    def test_width_mismatch(self):
        ep = make_episode([(24, 26, [1.0, 2.0], 0)])
        assert [v.kind for v in validate_episode(ep, SCHEMA1)] == ["width_mismatch"]

    def test_bad_delta(self):
        ep = make_episode([(24, 26, [1.0], 2)])
        assert [v.kind for v in validate_episode(ep, SCHEMA1)] == ["bad_delta"]

    def test_empty_episode(self):
        ep = Episode("e", "s", ())
        assert [v.kind for v in validate_episode(ep, SCHEMA1)] == ["empty_episode"]


class TestExposureAndEvents:
    def test_single_epoch(self):
        assert total_exposure(make_episode([(24, 30, [1.0], 0)])) == 6.0

    def test_additivity_is_exact(self):
        merged = make_episode([(24, 30, [1.0], 0)])
        split = make_episode([(24, 26, [1.0], 0), (26, 30, [1.0], 0)])
        assert total_exposure(split) == total_exposure(merged) == 6.0

    def test_three_episodes(self):
        episodes = [make_episode([(24, 34, [1.0], 0)], episode_id=f"e{i}") for i in range(3)]
        assert total_exposure(episodes) == 30.0

    def test_gap_time_excluded(self):
        ep = make_episode([(24, 26, [1.0], 0), (30, 33, [1.0], 0)])
        assert total_exposure(ep) == 5.0

    def test_refinement_never_moves_exposure(self, rng):
        # awkward cut points that do not subtract cleanly in binary
        ep = make_episode([(24.0, 30.0, [1.0], 1)])
        cut = 26.7
        refined = make_episode([(24.0, cut, [1.0], 0), (cut, 30.0, [1.0], 1)])
        assert total_exposure(refined) == total_exposure(ep)

    def test_event_counts(self):
        assert event_count(make_episode([(24, 26, [1.0], 0)])) == 0
        recurrent = make_episode([(24, 26, [1.0], 1), (26, 30, [1.0], 1)])
        assert event_count(recurrent) == 2

    def test_manual_tally_on_mixed_cohort(self):
        # five hand-written episodes, events marked inline: 1+0+2+1+0 = 4
        cohort = [
            make_episode([(24, 25, [1.0], 0), (25, 26, [1.0], 1)], episode_id="a"),
            make_episode([(24, 30, [0.5], 0)], episode_id="b"),
            make_episode([(24, 25, [0.1], 1), (25, 27, [0.1], 0), (27, 28, [0.1], 1)], episode_id="c"),
            make_episode([(24, 26, [0.0], 0), (26, 29, [0.0], 1)], episode_id="d"),
            make_episode([(24, 40, [2.0], 0)], episode_id="e"),
        ]
        assert event_count(cohort) == 4

    def test_union_measure_matches_exposure(self, rng):
        for _ in range(20):
            bounds = np.sort(rng.uniform(24, 60, size=8))
            epochs = [
                (bounds[2 * i], bounds[2 * i + 1], [0.0], 0)
                for i in range(4)
                if bounds[2 * i] < bounds[2 * i + 1]
            ]
            ep = make_episode(epochs)
            union = math.fsum(b - a for a, b, _, _ in epochs)
            assert total_exposure(ep) == pytest.approx(union, abs=1e-12)


class TestSchema:
    def test_embedding_block_must_be_contiguous(self):
        with pytest.raises(ValueError):
            make_schema(["emb0", "x", "emb1"], ("embedding", "numeric", "embedding"))

    def test_embedding_block_naming(self):
        with pytest.raises(ValueError):
            make_schema(["emb1", "emb2"], ("embedding", "embedding"))
        schema = make_schema(["x", "emb0", "emb1"], ("numeric", "embedding", "embedding"))
        assert schema.embedding_slice() == slice(1, 3)

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            make_schema(["x", "x"])

    def test_schema_json_round_trip(self, tmp_path):
        schema = make_schema(["x", "emb0", "emb1"], ("numeric", "embedding", "embedding"), start=12.5)
        path = tmp_path / "schema.json"
        write_schema_json(path, schema)
        assert read_schema_json(path) == schema


finite_floats = st.floats(
    allow_nan=False, allow_infinity=False, min_value=-1e12, max_value=1e12
)


class TestCsvRoundTrip:
    def test_awkward_floats_survive(self, tmp_path):
        schema = make_schema(["a", "b"])
        values = [0.1 + 0.2, 1e-300, 123456789.123456789, -0.0]
        ep = make_episode(
            [
                (24.0, 24.0 + values[0], [values[1], math.nan], 0),
                (24.0 + values[0], 31.0, [values[2], values[3]], 1),
            ],
            censored=True,
        )
        path = tmp_path / "d.csv"
        write_episodes_csv(path, [ep], schema)
        (back,) = read_episodes_csv(path, schema)
        assert back.episode_id == ep.episode_id
        assert back.subject_id == ep.subject_id
        assert back.censored_admin is True
        for original, parsed in zip(ep.epochs, back.epochs):
            assert parsed.t_start == original.t_start
            assert parsed.t_end == original.t_end
            assert parsed.delta == original.delta
            same = (parsed.covariates == original.covariates) | (
                np.isnan(parsed.covariates) & np.isnan(original.covariates)
            )
            assert same.all()

    @settings(max_examples=30, deadline=None)
    @given(rows=st.lists(st.tuples(finite_floats, st.booleans()), min_size=1, max_size=5))
    def test_round_trip_property(self, rows, tmp_path_factory):
        schema = make_schema(["v"], start=0.0)
        t = 0.0
        epochs = []
        for value, missing in rows:
            epochs.append((t, t + 1.0, [math.nan if missing else value], 0))
            t += 1.0
        ep = make_episode(epochs)
        path = tmp_path_factory.mktemp("csv") / "d.csv"
        write_episodes_csv(path, [ep], schema)
        (back,) = read_episodes_csv(path, schema)
        for original, parsed in zip(ep.epochs, back.epochs):
            same = (parsed.covariates == original.covariates) | (
                np.isnan(parsed.covariates) & np.isnan(original.covariates)
            )
            assert same.all()

    def test_covariates_are_immutable(self):
        ep = Epoch(24, 25, np.array([1.0, 2.0]), 0)
        with pytest.raises(ValueError):
            ep.covariates[0] = 3.0

    def test_header_must_match_schema(self, tmp_path):
        from hazardforge.errors import SchemaMismatch

        path = tmp_path / "d.csv"
        path.write_text("subject_id,episode_id,t_start,t_end,delta,other\ns,e,24,25,0,1\n")
        with pytest.raises(SchemaMismatch):
            read_episodes_csv(path, make_schema(["v"]))
