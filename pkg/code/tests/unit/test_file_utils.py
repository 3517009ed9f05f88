"""
Tests for utils.file_utils module.
"""

import pytest

HEADER = "school_id,treatment,z_frl,m_ell_g5m,w_ell_g5m,csem_ell_g5m,y_ell_g5m\n"


def write(tmp_path, text, name="schools.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadDataset:
    """Tests for load_dataset function."""

    def test_sample_fixture_loads(self, sample_csv):
        from utils.file_utils import load_dataset

        dataset = load_dataset(sample_csv)
        assert len(dataset) == 14
        assert dataset.covariate_names == ("frl",)
        assert dataset.cell_keys == (("ell", "g5m"), ("swd", "g5m"))
        assert dataset.record("A01").treatment == 1

    def test_withheld_obtained_average_with_size(self, sample_csv):
        from utils.file_utils import load_dataset

        cell = load_dataset(sample_csv).record("A03").cell(("swd", "g5m"))
        assert cell.withheld
        assert cell.size == 3
        assert cell.csem == 110.0
        assert cell.outcome_avg == 1379.0

    def test_empty_size_means_absent_cell(self, tmp_path):
        from utils.file_utils import load_dataset

        path = write(tmp_path, HEADER + "A,1,0.5,10,1450,80,1455\nB,0,0.2,,,,\n")
        dataset = load_dataset(path)
        assert dataset.record("B").cell(("ell", "g5m")) is None

    def test_values_without_size_rejected(self, tmp_path):
        from utils.exceptions import DataError
        from utils.file_utils import load_dataset

        path = write(tmp_path, HEADER + "A,1,0.5,,1450,80,1455\n")
        with pytest.raises(DataError, match="has values but no size"):
            load_dataset(path)

    def test_missing_treatment_column(self, tmp_path):
        from utils.exceptions import DataError
        from utils.file_utils import load_dataset

        path = write(tmp_path, "school_id,z_frl,m_ell_g5m\nA,0.5,10\n")
        with pytest.raises(DataError, match="treatment"):
            load_dataset(path)

    def test_duplicate_school_id_reports_lines(self, tmp_path):
        from utils.exceptions import DataError
        from utils.file_utils import load_dataset

        path = write(tmp_path, HEADER + "A,1,0.5,10,1450,80,1455\nA,0,0.2,12,1470,80,1471\n")
        with pytest.raises(DataError, match="line 3: duplicate school_id 'A'"):
            load_dataset(path)

    def test_short_row_reports_line(self, tmp_path):
        from utils.exceptions import DataError
        from utils.file_utils import load_dataset

        path = write(tmp_path, HEADER + "A,1,0.5,10,1450,80,1455\nB,0,0.2\n")
        with pytest.raises(DataError, match="line 3: expected 7 fields"):
            load_dataset(path)

    def test_truncated_last_row_not_dropped(self, tmp_path):
        from utils.exceptions import DataError
        from utils.file_utils import load_dataset

        path = write(tmp_path, HEADER + "A,1,0.5,10,1450,80,1455\nB,0,0.2,12\n")
        with pytest.raises(DataError, match="line 3: expected 7 fields, got 4"):
            load_dataset(path)

    def test_long_row_reports_line(self, tmp_path):
        from utils.exceptions import DataError
        from utils.file_utils import load_dataset

        path = write(tmp_path, HEADER + "A,1,0.5,10,1450,80,1455,9\n")
        with pytest.raises(DataError, match="line 2: expected 7 fields, got 8"):
            load_dataset(path)

    def test_blank_lines_keep_line_numbers(self, tmp_path):
        from utils.exceptions import DataError
        from utils.file_utils import load_dataset

        path = write(tmp_path, HEADER + "A,1,0.5,10,1450,80,1455\n\nB,7,0.2,12,1470,80,1471\n")
        with pytest.raises(DataError, match="line 4: treatment must be 0 or 1"):
            load_dataset(path)

    def test_treatment_must_be_binary(self, tmp_path):
        from utils.exceptions import DataError
        from utils.file_utils import load_dataset

        path = write(tmp_path, HEADER + "A,2,0.5,10,1450,80,1455\n")
        with pytest.raises(DataError, match="treatment must be 0 or 1"):
            load_dataset(path)

    def test_non_numeric_value(self, tmp_path):
        from utils.exceptions import DataError
        from utils.file_utils import load_dataset

        path = write(tmp_path, HEADER + "A,1,0.5,10,high,80,1455\n")
        with pytest.raises(DataError, match="line 2: w_ell_g5m is not a number"):
            load_dataset(path)

    def test_unknown_column_rejected(self, tmp_path):
        from utils.exceptions import DataError
        from utils.file_utils import load_dataset

        path = write(tmp_path, "school_id,treatment,notes\nA,1,x\n")
        with pytest.raises(DataError, match="unrecognized column"):
            load_dataset(path)

    def test_cell_without_size_column(self, tmp_path):
        from utils.exceptions import DataError
        from utils.file_utils import load_dataset

        path = write(tmp_path, "school_id,treatment,w_ell_g5m\nA,1,1450\n")
        with pytest.raises(DataError, match="no size column"):
            load_dataset(path)

    def test_nonexistent_file(self, tmp_path):
        from utils.file_utils import load_dataset

        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "missing.csv")


class TestWriteDataset:
    def test_generated_dataset_reloads_identically(self, tmp_path, sim_population):
        from utils.file_utils import load_dataset, write_dataset

        dataset = sim_population.dataset
        path = write_dataset(dataset, tmp_path / "out" / "schools.csv")
        assert load_dataset(path) == dataset

    def test_output_uses_lf_line_endings(self, tmp_path, sample_csv):
        from utils.file_utils import load_dataset, write_dataset

        path = write_dataset(load_dataset(sample_csv), tmp_path / "copy.csv")
        assert b"\r\n" not in path.read_bytes()


class TestCsemTables:
    def test_load_table_uses_file_stem(self, csem_dir):
        from utils.file_utils import load_csem_table

        table = load_csem_table(csem_dir / "g5m.csv")
        assert table.assessment_key == "g5m"
        assert table.scores == (1300.0, 1400.0, 1500.0, 1600.0)

    def test_load_tables_from_directory(self, csem_dir):
        from utils.file_utils import load_csem_tables

        assert list(load_csem_tables(csem_dir)) == ["g5m"]

    def test_empty_directory(self, tmp_path):
        from utils.exceptions import DataError
        from utils.file_utils import load_csem_tables

        with pytest.raises(DataError, match="no CSEM tables"):
            load_csem_tables(tmp_path)

    def test_table_needs_both_columns(self, tmp_path):
        from utils.exceptions import DataError
        from utils.file_utils import load_csem_table

        path = write(tmp_path, "score,sd\n1400,90\n", name="g5m.csv")
        with pytest.raises(DataError, match="score and csem"):
            load_csem_table(path)


class TestStructuredFiles:
    def test_yaml_round_trip_is_sorted(self, tmp_path):
        from utils.file_utils import load_structured_file, write_structured_file

        path = write_structured_file({"b": 1, "a": [1, 2]}, tmp_path / "run.yaml")
        assert path.read_text().startswith("a:")
        assert load_structured_file(path) == {"a": [1, 2], "b": 1}

    def test_json_by_extension(self, tmp_path):
        from utils.file_utils import load_structured_file

        path = write(tmp_path, '{"reps": 10}', name="run.json")
        assert load_structured_file(path) == {"reps": 10}

    def test_invalid_yaml(self, tmp_path):
        from utils.exceptions import UsageError
        from utils.file_utils import load_structured_file

        path = write(tmp_path, "reps: [1, 2\n", name="bad.yaml")
        with pytest.raises(UsageError):
            load_structured_file(path)

    def test_top_level_must_be_mapping(self, tmp_path):
        from utils.exceptions import UsageError
        from utils.file_utils import load_structured_file

        path = write(tmp_path, "- 1\n- 2\n", name="list.yaml")
        with pytest.raises(UsageError, match="mapping"):
            load_structured_file(path)

    def test_validate_file_path(self, tmp_path, sample_csv):
        from utils.file_utils import validate_file_path

        assert validate_file_path(sample_csv)
        assert not validate_file_path(tmp_path)
        assert not validate_file_path(tmp_path / "missing.csv")


class TestResultTables:
    def test_write_table_from_rows(self, tmp_path):
        from utils.file_utils import write_table

        path = write_table([{"a": 1, "b": 2.5}], tmp_path / "t.csv")
        assert path.read_text() == "a,b\n1,2.5\n"

    def test_matched_sets_one_row_per_school(self, tmp_path):
        import pandas as pd

        from matching.results import MatchedSet, MatchResult
        from utils.file_utils import write_matched_sets

        result = MatchResult(
            sets=(MatchedSet(0, ("T1",), ("C1", "C2"), 0.4), MatchedSet(1, ("T2", "T3"), ("C3",), 0.2)),
            unmatched_treated=("T4",),
        )
        frame = pd.read_csv(write_matched_sets(result, tmp_path / "sets.csv"))
        assert list(frame.columns) == ["set_id", "school_id", "role", "weight"]
        assert list(frame["school_id"]) == ["T1", "C1", "C2", "T2", "T3", "C3"]
        assert list(frame["weight"]) == [1.0, 0.5, 0.5, 1.0, 1.0, 2.0]
        assert "T4" not in set(frame["school_id"])

    def test_estimates_table(self, tmp_path):
        import pandas as pd

        from effects.estimators import EffectEstimate
        from utils.file_utils import write_estimates

        estimates = [
            EffectEstimate("matched_difference", ("s1", "g5m"), 3.0, 4, 7, ps_kind="ml"),
            EffectEstimate("marginal_odds", ("s1", "g5m"), 2.5, 4, 9),
        ]
        frame = pd.read_csv(write_estimates(estimates, tmp_path / "estimates.csv"), keep_default_na=False)
        assert list(frame["ps_kind"]) == ["ml", ""]
        assert list(frame["assessment"]) == ["g5m", "g5m"]
        assert list(frame["point"]) == [3.0, 2.5]
