"""
Tests for mepscore_types module.
"""

import numpy as np
import pytest

KEY_A = ("s1", "g5m")
KEY_B = ("s2", "g5m")


@pytest.fixture
def two_schools(make_dataset):
    return make_dataset(
        [
            ("A", 1, (0.5,), {KEY_A: (10, 1450.0, 80.0, 1460.0), KEY_B: (4, 1400.0, 90.0, None)}),
            ("B", 0, (0.2,), {KEY_A: (20, 1480.0, 75.0, 1482.0)}),
        ],
        covariate_names=("frl",),
        cell_keys=[KEY_A, KEY_B],
    )


class TestExitCode:
    """Tests for ExitCode enum."""

    def test_exit_code_values(self):
        from mepscore_types import ExitCode

        assert ExitCode.SUCCESS == 0
        assert ExitCode.USAGE_ERROR == 1
        assert ExitCode.DATA_ERROR == 2
        assert ExitCode.NUMERICAL_ERROR == 3
        assert ExitCode.USER_INTERRUPT == 130

    def test_exit_code_unique(self):
        from mepscore_types import ExitCode

        values = [code.value for code in ExitCode]
        assert len(values) == len(set(values))


class TestCellKeys:
    def test_format_cell_key(self):
        from mepscore_types import format_cell_key

        assert format_cell_key(("ell", "g5m")) == "ell_g5m"

    def test_key_layout(self, two_schools):
        assert two_schools.cell_keys == (KEY_A, KEY_B)
        assert two_schools.subgroup_keys == ("s1", "s2")
        assert two_schools.assessment_keys == ("g5m",)
        assert two_schools.keys_for("g5m") == (KEY_A, KEY_B)
        assert two_schools.keys_for("g8r") == ()


class TestSubgroupCell:
    def test_withheld_when_obtained_missing(self):
        from mepscore_types import SubgroupCell

        assert SubgroupCell("s1", "g5m", 3).withheld
        assert not SubgroupCell("s1", "g5m", 3, 1450.0).withheld

    def test_record_has_withheld(self, two_schools):
        a, b = two_schools.records
        assert not a.has_withheld([KEY_A, KEY_B])
        # B has no KEY_B cell at all
        assert b.has_withheld([KEY_A, KEY_B])
        assert not b.has_withheld([KEY_A])


class TestMatrices:
    def test_obtained_matrix_marks_missing(self, two_schools):
        values, observed = two_schools.obtained_matrix()
        assert values.shape == (2, 2)
        assert observed.tolist() == [[True, True], [True, False]]
        assert values[0, 0] == 1450.0
        assert np.isnan(values[1, 1])

    def test_size_and_outcome_columns(self, two_schools):
        sizes = two_schools.size_matrix([KEY_B])
        assert sizes[0, 0] == 4
        assert np.isnan(sizes[1, 0])
        outcomes = two_schools.outcome_matrix()
        assert np.isnan(outcomes[0, 1])
        assert outcomes[1, 0] == 1482.0

    def test_treatment_and_covariates(self, two_schools):
        assert two_schools.treatment_vector().tolist() == [1.0, 0.0]
        assert two_schools.covariate_matrix().shape == (2, 1)

    def test_count_by_treatment(self, two_schools):
        from mepscore_types import count_by_treatment

        assert count_by_treatment(two_schools) == {1: 1, 0: 1}


class TestMasking:
    def test_with_masked_cells_withholds_only_named_cells(self, two_schools):
        masked = two_schools.with_masked_cells([("A", KEY_A)])
        a = masked.record("A")
        assert a.cell(KEY_A).withheld
        assert a.cell(KEY_A).size == 10
        assert not a.cell(KEY_B).withheld
        assert masked.record("B") == two_schools.record("B")
        # The source dataset is untouched
        assert not two_schools.record("A").cell(KEY_A).withheld

    def test_replace_records_keeps_layout(self, two_schools):
        subset = two_schools.replace_records(r for r in two_schools.records if r.school_id == "B")
        assert subset.school_ids == ("B",)
        assert subset.cell_keys == two_schools.cell_keys
        assert subset.covariate_names == ("frl",)
        assert len(two_schools) == 2


class TestValidate:
    def test_clean_dataset_has_no_violations(self, two_schools):
        from mepscore_types import validate

        assert validate(two_schools) == []

    def test_bad_treatment_names_record(self, make_dataset):
        from mepscore_types import validate

        dataset = make_dataset(
            [
                ("A", 2, (), {KEY_A: (10, 1450.0, 80.0, None)}),
                ("B", 0, (), {KEY_A: (12, 1460.0, 80.0, None)}),
            ]
        )
        violations = validate(dataset)
        assert len(violations) == 1
        assert violations[0].school_id == "A"
        assert violations[0].field == "treatment"

    def test_size_zero_violates_size_rule(self, make_dataset):
        from mepscore_types import validate

        dataset = make_dataset([("A", 1, (), {KEY_A: (0, 1450.0, 80.0, None)})])
        violations = validate(dataset)
        assert [v.rule for v in violations] == ["size >= 1"]

    def test_duplicate_school_and_covariate_length(self, make_dataset):
        from mepscore_types import validate

        dataset = make_dataset(
            [
                ("A", 1, (0.1, 0.2), {KEY_A: (5, 1450.0, 80.0, None)}),
                ("A", 0, (0.1,), {KEY_A: (5, 1450.0, 80.0, None)}),
            ],
            covariate_names=("frl",),
        )
        rules = {v.rule for v in validate(dataset)}
        assert "school_id is unique" in rules
        assert "covariates has length 1" in rules

    def test_nonpositive_csem(self, make_dataset):
        from mepscore_types import validate

        dataset = make_dataset([("A", 1, (), {KEY_A: (5, 1450.0, 0.0, None)})])
        assert [v.rule for v in validate(dataset)] == ["csem > 0"]
