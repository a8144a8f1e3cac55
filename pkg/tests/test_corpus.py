import json
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import SPLITMIX64_SEED0_FIRST, splitmix64_numpy
from qclkg.corpus import (
    DuplicateDoi,
    FractionError,
    SchemaError,
    SplitMix64,
    fragment_from_envelope,
    load_abstract_corpus,
    load_instruction_dataset,
    sample_from_json,
    sample_to_json,
    select,
    shuffled,
    split_dataset,
)
from qclkg.property_model import PropertyClass, WorkingMode


def write_lines(path, objs):
    path.write_text("".join((o if isinstance(o, str) else json.dumps(o)) + "\n" for o in objs), encoding="utf-8")
    return path


def sample_obj(i, **kw):
    obj = {
        "id": f"X{i}",
        "instruction": "Extract the operating temperature.",
        "sentence": f"Lasing up to {100 + i} K.",
        "expected": {"temperature": f"{100 + i} K"},
        "property_class": "temperature",
    }
    obj.update(kw)
    return obj


class TestSplitMix64:
    def test_known_first_output(self):
        assert SplitMix64(0).next() == SPLITMIX64_SEED0_FIRST

    @pytest.mark.parametrize("seed", [0, 1, 20240601, 2**64 - 1])
    def test_matches_numpy_oracle(self, seed):
        rng = SplitMix64(seed)
        assert [rng.next() for _ in range(50)] == splitmix64_numpy(seed, 50)

    def test_seed_range(self):
        with pytest.raises(ValueError):
            SplitMix64(2**64)
        with pytest.raises(ValueError):
            SplitMix64(-1)

    def test_shuffle_is_a_permutation(self):
        items = list(range(100))
        out = shuffled(items, 7)
        assert sorted(out) == items and out != items
        assert shuffled(items, 7) == out


class TestSplit:
    def test_paper_sized_split(self):
        ids = [f"S{i:04d}" for i in range(1, 1041)]
        split = split_dataset(ids, 20240601)
        assert (len(split.train_ids), len(split.test_ids), len(split.holdout_ids)) == (832, 104, 104)

    def test_exact_fractions(self):
        # 0.8 * 10 is 8 here even though float arithmetic says otherwise
        split = split_dataset([str(i) for i in range(10)], 1, 0.7, 0.2)
        assert (len(split.train_ids), len(split.test_ids)) == (7, 2)

    @given(n=st.integers(min_value=0, max_value=400), seed=st.integers(min_value=0, max_value=2**64 - 1))
    def test_partition(self, n, seed):
        ids = [f"i{k}" for k in range(n)]
        split = split_dataset(ids, seed)
        parts = split.train_ids + split.test_ids + split.holdout_ids
        assert sorted(parts) == sorted(ids)
        assert len(split.train_ids) == (4 * n) // 5
        assert len(split.test_ids) == n // 10

    def test_deterministic_and_seed_sensitive(self):
        ids = [str(i) for i in range(200)]
        assert split_dataset(ids, 5) == split_dataset(ids, 5)
        assert split_dataset(ids, 5).train_ids != split_dataset(ids, 6).train_ids

    def test_bad_fractions(self):
        with pytest.raises(FractionError):
            split_dataset(["a"], 0, 0.8, 0.3)
        with pytest.raises(FractionError):
            split_dataset(["a"], 0, -0.1, 0.1)

    def test_duplicate_ids(self):
        with pytest.raises(ValueError):
            split_dataset(["a", "a"], 0)

    def test_to_json_keys(self):
        data = split_dataset(["a", "b", "c"], 0).to_json()
        assert set(data) == {"seed", "train_frac", "test_frac", "train_ids", "test_ids", "holdout_ids"}


class TestInstructionDataset:
    def test_fixture(self, fixtures_dir):
        samples = load_instruction_dataset(fixtures_dir / "instructions.jsonl")
        assert len(samples) == 1040
        counts = Counter(s.property_class for s in samples)
        assert counts == {
            PropertyClass.POWER: 208,
            PropertyClass.TEMPERATURE: 272,
            PropertyClass.FREQUENCY: 232,
            PropertyClass.DESIGN_TYPE: 216,
            PropertyClass.HETEROSTRUCTURE: 112,
        }

    def test_missing_field_reports_line(self, tmp_path):
        bad = sample_obj(2)
        del bad["sentence"]
        path = write_lines(tmp_path / "d.jsonl", [sample_obj(1), bad])
        with pytest.raises(SchemaError) as err:
            load_instruction_dataset(path)
        assert err.value.line == 2 and "sentence" in str(err.value)

    def test_invalid_json_line(self, tmp_path):
        path = write_lines(tmp_path / "d.jsonl", [sample_obj(1), "", "{not json"])
        with pytest.raises(SchemaError) as err:
            load_instruction_dataset(path)
        assert err.value.line == 3

    def test_class_must_match_expected(self, tmp_path):
        path = write_lines(tmp_path / "d.jsonl", [sample_obj(1, property_class="power")])
        with pytest.raises(SchemaError, match="does not match"):
            load_instruction_dataset(path)

    def test_bad_expected_value(self, tmp_path):
        path = write_lines(tmp_path / "d.jsonl", [sample_obj(1, expected={"temperature": "-5 K"})])
        with pytest.raises(SchemaError, match="bad expected value"):
            load_instruction_dataset(path)

    def test_duplicate_id(self, tmp_path):
        path = write_lines(tmp_path / "d.jsonl", [sample_obj(1), sample_obj(1)])
        with pytest.raises(SchemaError, match="duplicate id"):
            load_instruction_dataset(path)

    def test_json_round_trip(self):
        s = sample_from_json(sample_obj(3), 1)
        assert sample_from_json(sample_to_json(s), 1) == s

    def test_select(self):
        samples = [sample_from_json(sample_obj(i), i) for i in range(3)]
        assert [s.sample_id for s in select(samples, ["X2", "X0"])] == ["X2", "X0"]


class TestEnvelope:
    def test_lenient_drops_bad_values(self):
        frag = fragment_from_envelope(
            {"temperature": "hot", "power": "200 mW", "working_mode": "CW", "frequency": None}, strict=False
        )
        assert frag.temperature is None and frag.power.value == 200
        assert frag.working_mode is WorkingMode.CONTINUOUS_WAVE
        assert frag.raw["temperature"] == "hot"

    def test_strict_raises(self):
        with pytest.raises(ValueError):
            fragment_from_envelope({"heterostructure": "GaAs"}, strict=True)

    def test_null_markers(self):
        assert fragment_from_envelope({"power": "n/a", "temperature": "null"}, strict=True).is_empty


class TestAbstractCorpus:
    def doc(self, i, **kw):
        obj = {"id": f"a{i}", "text": "An abstract.", "doi": f"10.5555/x.{i}", "url": "", "cited_dois": []}
        obj.update(kw)
        return obj

    def test_fixture(self, fixtures_dir):
        docs = load_abstract_corpus(fixtures_dir / "abstracts.jsonl")
        assert len(docs) == 42
        assert docs[0].doi == "10.5555/qcl.0001" and len(docs[0].cited_dois) == 3

    def test_duplicate_doi_is_case_insensitive(self, tmp_path):
        path = write_lines(tmp_path / "a.jsonl", [self.doc(1), self.doc(2, doi="10.5555/X.1")])
        with pytest.raises(DuplicateDoi) as err:
            load_abstract_corpus(path)
        assert err.value.line == 2

    def test_malformed_doi(self, tmp_path):
        path = write_lines(tmp_path / "a.jsonl", [self.doc(1, doi="doi:10.1/x")])
        with pytest.raises(SchemaError, match="malformed doi"):
            load_abstract_corpus(path)

    def test_cited_dois_type(self, tmp_path):
        path = write_lines(tmp_path / "a.jsonl", [self.doc(1, cited_dois="10.5555/y")])
        with pytest.raises(SchemaError):
            load_abstract_corpus(path)
