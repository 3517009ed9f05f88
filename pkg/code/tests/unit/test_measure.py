"""
Tests for models.measure module.
"""

import numpy as np
import pytest

KEY = ("s1", "g5m")


def one_cell(make_dataset, size, csem=250.0, obtained=1450.0):
    return make_dataset([("A", 1, (), {KEY: (size, obtained, csem, None)})])


class TestBuildSigma:
    """Error variance is csem^2 / m per cell."""

    @pytest.mark.parametrize(
        "size,expected",
        [(44, 62500.0 / 44), (1, 62500.0), (6, 62500.0 / 6)],
    )
    def test_variance_from_cell_csem(self, make_dataset, size, expected):
        from models.measure import build_sigma

        sigma = build_sigma(one_cell(make_dataset, size))
        assert sigma.error_variance("A", KEY) == pytest.approx(expected)

    def test_known_values(self, make_dataset):
        from models.measure import build_sigma

        variance = build_sigma(one_cell(make_dataset, 44)).error_variance("A", KEY)
        assert variance == pytest.approx(1420.45, abs=0.01)
        assert np.sqrt(variance) == pytest.approx(37.7, abs=0.05)
        small = build_sigma(one_cell(make_dataset, 6)).error_variance("A", KEY)
        assert small == pytest.approx(10416.7, abs=0.05)

    def test_missing_csem_names_cell(self, make_dataset):
        from models.measure import build_sigma
        from utils.exceptions import DataError

        dataset = one_cell(make_dataset, 10, csem=None)
        with pytest.raises(DataError, match="A/s1_g5m"):
            build_sigma(dataset)

    def test_withheld_cell_without_csem_is_allowed(self, make_dataset):
        from models.measure import build_sigma

        dataset = one_cell(make_dataset, 10, csem=None, obtained=None)
        assert build_sigma(dataset).error_variance("A", KEY) is None

    def test_absent_cell_has_no_variance(self, make_dataset):
        from models.measure import build_sigma

        other = ("s2", "g5m")
        dataset = make_dataset(
            [("A", 1, (), {KEY: (10, 1450.0, 80.0, None)})], cell_keys=[KEY, other]
        )
        assert build_sigma(dataset).error_variance("A", other) is None

    def test_table_source_evaluated_at_scores(self, make_dataset):
        from models.measure import CsemTable, build_sigma

        dataset = one_cell(make_dataset, 4, csem=None, obtained=1450.0)
        table = CsemTable.from_pairs("g5m", [(1400, 80), (1500, 100)])
        sigma = build_sigma(dataset, {"g5m": table})
        assert sigma.error_variance("A", KEY) == pytest.approx(90.0**2 / 4)
        rescored = build_sigma(dataset, {"g5m": table}, scores=np.array([[1400.0]]))
        assert rescored.error_variance("A", KEY) == pytest.approx(80.0**2 / 4)

    def test_variances_are_read_only(self, make_dataset):
        from models.measure import build_sigma

        sigma = build_sigma(one_cell(make_dataset, 10))
        with pytest.raises(ValueError):
            sigma.variances[0, 0] = 1.0


class TestLookupCsem:
    def test_linear_midpoint(self):
        from models.measure import CsemTable, lookup_csem

        table = CsemTable.from_pairs("g5m", [(1400, 80), (1500, 100)])
        assert lookup_csem(table, 1450) == pytest.approx(90.0)

    def test_constant_extrapolation(self):
        from models.measure import CsemTable, lookup_csem

        table = CsemTable.from_pairs("g5m", [(1400, 80), (1500, 100)])
        assert lookup_csem(table, 1300) == pytest.approx(80.0)
        assert lookup_csem(table, 1900) == pytest.approx(100.0)

    def test_single_knot(self):
        from models.measure import CsemTable, lookup_csem

        table = CsemTable.from_pairs("g5m", [(1500, 95)])
        assert lookup_csem(table, 200.0) == 95.0
        assert lookup_csem(table, np.array([1000.0, 2000.0])).tolist() == [95.0, 95.0]

    def test_pairs_are_sorted(self):
        from models.measure import CsemTable

        table = CsemTable.from_pairs("g5m", [(1500, 100), (1400, 80)])
        assert table.scores == (1400.0, 1500.0)

    @pytest.mark.parametrize(
        "scores,csems",
        [((), ()), ((1400.0, 1400.0), (80.0, 90.0)), ((1400.0,), (0.0,)), ((1400.0,), (80.0, 90.0))],
    )
    def test_invalid_tables(self, scores, csems):
        from models.measure import CsemTable
        from utils.exceptions import DataError

        with pytest.raises(DataError):
            CsemTable("g5m", scores, csems)


class TestMergeSigma:
    def test_later_models_win(self, make_dataset):
        from models.measure import MeasurementModel, merge_sigma

        base = MeasurementModel(("A",), (KEY,), np.array([[4.0]]))
        over = MeasurementModel(("A",), (KEY,), np.array([[9.0]]))
        gap = MeasurementModel(("A",), (KEY,), np.array([[np.nan]]))
        assert merge_sigma([base, over, gap]).error_variance("A", KEY) == 9.0

    def test_layout_mismatch(self):
        from models.measure import MeasurementModel, merge_sigma
        from utils.exceptions import DataError

        a = MeasurementModel(("A",), (KEY,), np.array([[4.0]]))
        b = MeasurementModel(("B",), (KEY,), np.array([[4.0]]))
        with pytest.raises(DataError):
            merge_sigma([a, b])

    def test_describe_reports_mean_sd(self):
        from models.measure import MeasurementModel, describe

        model = MeasurementModel(("A", "B"), (KEY,), np.array([[4.0], [16.0]]))
        assert describe(model) == {"s1_g5m": pytest.approx(3.0)}
