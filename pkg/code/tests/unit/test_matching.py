"""
Tests for matching package.
"""

import itertools

import numpy as np
import pytest


def units(make_dataset, treated, controls):
    """Dataset and logits for treated/control schools given by logit lists."""
    logits = {}
    rows = []
    for prefix, values, flag in (("T", treated, 1), ("C", controls, 0)):
        for k, value in enumerate(values):
            sid = f"{prefix}{k}"
            logits[sid] = value
            rows.append((sid, flag, (), {}))
    return make_dataset(rows, cell_keys=[]), logits


def enumerate_optimum(treated, controls, spec):
    """
    Best (matched controls, cost units) over every feasible edge choice, or None.

    Every treated with a caliper partner takes 1..max_controls of its edges
    and no control takes more than max_treated edges.
    """
    from matching.results import distance_units, within_caliper

    options = []
    for t in treated:
        edges = [
            (j, distance_units(t, c)) for j, c in enumerate(controls) if within_caliper(t, c, spec.caliper_logits)
        ]
        if not edges:
            continue
        sizes = range(1, min(spec.max_controls_per_treated, len(edges)) + 1)
        options.append([chosen for r in sizes for chosen in itertools.combinations(edges, r)])

    best = None
    for choice in itertools.product(*options):
        c_deg = [0] * len(controls)
        cost = 0
        for edges in choice:
            for j, units_ in edges:
                c_deg[j] += 1
                cost += units_
        if any(d > spec.max_treated_per_control for d in c_deg):
            continue
        score = (-sum(d > 0 for d in c_deg), cost)
        if best is None or score < best:
            best = score
    return None if best is None else (-best[0], best[1])


def greedy_pairing(treated, controls, spec):
    """Nearest available control for each coverable treated; None when one is left without."""
    from matching.results import distance_units, within_caliper

    c_deg = [0] * len(controls)
    cost = 0
    for t in treated:
        partners = [j for j, c in enumerate(controls) if within_caliper(t, c, spec.caliper_logits)]
        if not partners:
            continue
        free = [j for j in partners if c_deg[j] < spec.max_treated_per_control]
        if not free:
            return None
        j = min(free, key=lambda k: (distance_units(t, controls[k]), k))
        c_deg[j] += 1
        cost += distance_units(t, controls[j])
    return sum(d > 0 for d in c_deg), cost


def random_instance(rng):
    """At most four treated and four controls on a 0.1-spaced logit grid."""
    from matching import MatchSpec

    grid = np.round(np.arange(0.0, 1.01, 0.1), 1)
    treated = [float(v) for v in rng.choice(grid, int(rng.integers(1, 5)))]
    controls = [float(v) for v in rng.choice(grid, int(rng.integers(1, 5)))]
    spec = MatchSpec(
        caliper_logits=float(rng.choice([0.15, 0.25, 0.45])),
        max_controls_per_treated=int(rng.integers(1, 4)),
        max_treated_per_control=int(rng.integers(1, 5)),
    )
    return treated, controls, spec


def check_against_enumeration(make_dataset, make_ps, treated, controls, spec):
    from matching import full_match

    dataset, logits = units(make_dataset, treated, controls)
    result = full_match(make_ps(logits), dataset, spec)
    optimum = enumerate_optimum(treated, controls, spec)
    if optimum is None:
        assert not result.feasible
        return result
    assert result.feasible
    assert (len(result.matched_controls), result.total_cost_units) == optimum
    return result


class TestMatchSpec:
    def test_rejects_nonpositive_caliper(self):
        from matching import MatchSpec
        from utils.exceptions import DataError

        with pytest.raises(DataError):
            MatchSpec(caliper_logits=0.0)

    def test_rejects_ratio_below_one(self):
        from matching import MatchSpec
        from utils.exceptions import DataError

        with pytest.raises(DataError):
            MatchSpec(caliper_logits=0.5, max_controls_per_treated=0)


class TestFullMatch:
    def test_forced_pair(self, make_dataset, make_ps):
        from matching import MatchSpec, full_match

        dataset, logits = units(make_dataset, [0.0], [0.3])
        result = full_match(make_ps(logits), dataset, MatchSpec(0.5))
        assert len(result.sets) == 1
        assert result.sets[0].treated == ("T0",) and result.sets[0].controls == ("C0",)
        assert result.weights == {"T0": 1.0, "C0": 1.0}
        assert result.total_distance == pytest.approx(0.3)
        assert result.unmatched_treated == ()

    def test_caliper_exclusion(self, make_dataset, make_ps):
        from matching import MatchSpec, full_match

        dataset, logits = units(make_dataset, [0.0], [1.2])
        result = full_match(make_ps(logits), dataset, MatchSpec(1.0))
        assert result.sets == ()
        assert result.unmatched_treated == ("T0",)
        assert result.unmatched_fraction(1) == 1.0

    def test_one_treated_many_controls(self, make_dataset, make_ps):
        from matching import MatchSpec, full_match

        dataset, logits = units(make_dataset, [0.0], [-0.2, 0.1, 0.2])
        result = full_match(make_ps(logits), dataset, MatchSpec(0.5, max_controls_per_treated=5))
        assert len(result.sets) == 1
        assert result.sets[0].controls == ("C0", "C1", "C2")
        assert result.weights["C1"] == pytest.approx(1 / 3)

    def test_control_ratio_bound(self, make_dataset, make_ps):
        from matching import MatchSpec, full_match

        dataset, logits = units(make_dataset, [0.0], [-0.3, 0.1, 0.2])
        result = full_match(make_ps(logits), dataset, MatchSpec(0.5, max_controls_per_treated=2))
        assert result.sets[0].controls == ("C1", "C2")

    def test_one_control_many_treated(self, make_dataset, make_ps):
        from matching import MatchSpec, full_match

        dataset, logits = units(make_dataset, [0.0, 0.1, 0.2], [0.1])
        result = full_match(make_ps(logits), dataset, MatchSpec(0.5, max_treated_per_control=3))
        assert len(result.sets) == 1
        assert result.sets[0].treated == ("T0", "T1", "T2")
        assert result.weights["C0"] == pytest.approx(3.0)

    def test_infeasible_ratio_bounds(self, make_dataset, make_ps):
        from matching import MatchSpec, full_match

        dataset, logits = units(make_dataset, [0.0, 0.1, 0.2], [0.1])
        result = full_match(make_ps(logits), dataset, MatchSpec(0.5, max_treated_per_control=2))
        assert not result.feasible
        assert result.sets == ()

    def test_needs_both_groups(self, make_dataset, make_ps):
        from matching import MatchSpec, full_match
        from utils.exceptions import DataError

        dataset, logits = units(make_dataset, [0.0, 0.1], [])
        with pytest.raises(DataError):
            full_match(make_ps(logits), dataset, MatchSpec(0.5))

    def test_missing_score(self, make_dataset, make_ps):
        from matching import MatchSpec, full_match
        from utils.exceptions import DataError

        dataset, logits = units(make_dataset, [0.0], [0.1])
        del logits["C0"]
        with pytest.raises(DataError, match="no propensity score"):
            full_match(make_ps(logits), dataset, MatchSpec(0.5))

    def test_sets_partition_matched_units(self, sim_population):
        from matching import MatchSpec, full_match
        from models.propensity import ps_naive

        dataset = sim_population.dataset
        ps = ps_naive(dataset)
        n_treated = int(dataset.treatment_vector().sum())
        result = full_match(ps, dataset, MatchSpec(0.5, 5, n_treated))
        members = [sid for s in result.sets for sid in s.members()]
        assert len(members) == len(set(members))
        for matched in result.sets:
            assert min(len(matched.treated), len(matched.controls)) == 1
            assert len(matched.controls) <= 5
            for t in matched.treated:
                for c in matched.controls:
                    assert abs(ps.logit_of(t) - ps.logit_of(c)) <= 0.5 + 1e-12
        assert len(result.matched_treated) + len(result.unmatched_treated) == n_treated

    def test_deterministic(self, sim_population):
        from matching import MatchSpec, full_match
        from models.propensity import ps_naive

        ps = ps_naive(sim_population.dataset)
        spec = MatchSpec(0.7, 5, 100)
        assert full_match(ps, sim_population.dataset, spec) == full_match(ps, sim_population.dataset, spec)


class TestEnumerationOracle:
    @pytest.mark.parametrize("seed", range(40))
    def test_flow_objective_matches_enumeration(self, seed, make_dataset, make_ps):
        check_against_enumeration(make_dataset, make_ps, *random_instance(np.random.default_rng(seed)))

    @pytest.mark.slow
    def test_five_hundred_random_instances(self, make_dataset, make_ps):
        rng = np.random.default_rng(2024)
        for _ in range(500):
            check_against_enumeration(make_dataset, make_ps, *random_instance(rng))


class TestMatchingInvariants:
    @pytest.mark.parametrize("seed", range(25))
    def test_wider_caliper_never_adds_unmatched_treated(self, seed, make_dataset, make_ps):
        from matching import MatchSpec, full_match

        rng = np.random.default_rng(seed)
        treated = [float(v) for v in rng.normal(0.3, 0.8, int(rng.integers(1, 9)))]
        controls = [float(v) for v in rng.normal(-0.2, 0.8, int(rng.integers(1, 9)))]
        dataset, logits = units(make_dataset, treated, controls)
        ps = make_ps(logits)
        counts = [
            len(full_match(ps, dataset, MatchSpec(c, 5, len(treated))).unmatched_treated)
            for c in (0.05, 0.1, 0.25, 0.5, 1.0, 2.0)
        ]
        assert counts == sorted(counts, reverse=True)

    @pytest.mark.parametrize("seed", range(40))
    def test_no_worse_than_greedy_pairing(self, seed, make_dataset, make_ps):
        from matching import full_match

        treated, controls, spec = random_instance(np.random.default_rng(seed))
        greedy = greedy_pairing(treated, controls, spec)
        if greedy is None:
            pytest.skip("greedy pairing leaves a coverable treated school without a control")
        dataset, logits = units(make_dataset, treated, controls)
        result = full_match(make_ps(logits), dataset, spec)
        assert result.feasible
        # More matched controls first, then less distance
        assert (-len(result.matched_controls), result.total_cost_units) <= (-greedy[0], greedy[1])
        if len(result.matched_controls) == greedy[0]:
            assert result.total_cost_units <= greedy[1]

    @pytest.mark.parametrize("seed", range(15))
    def test_removing_unmatched_treated_keeps_solution(self, seed, make_dataset, make_ps):
        from matching import MatchSpec, full_match

        rng = np.random.default_rng(seed)
        treated = [float(v) for v in rng.normal(0.2, 0.8, 6)] + [5.0]
        controls = [float(v) for v in rng.normal(0.0, 0.8, 6)]
        spec = MatchSpec(0.4, 3, 7)
        dataset, logits = units(make_dataset, treated, controls)
        ps = make_ps(logits)
        full = full_match(ps, dataset, spec)
        assert "T6" in full.unmatched_treated

        dropped = set(full.unmatched_treated)
        kept = dataset.replace_records(r for r in dataset.records if r.school_id not in dropped)
        reduced = full_match(ps, kept, spec)
        assert reduced.sets == full.sets
        assert reduced.total_cost_units == full.total_cost_units
        assert reduced.unmatched_treated == ()
        assert reduced.feasible == full.feasible


class TestWeights:
    def test_effective_sample_size_pairs(self):
        from matching import MatchedSet, MatchResult, effective_sample_size

        sets = tuple(MatchedSet(k, (f"T{k}",), (f"C{k}",), 0.1) for k in range(5))
        assert effective_sample_size(MatchResult(sets, ())) == pytest.approx(10.0)

    def test_effective_sample_size_one_to_two(self):
        from matching import MatchedSet, MatchResult, effective_sample_size

        result = MatchResult((MatchedSet(1, ("T",), ("C1", "C2"), 0.2),), ())
        assert effective_sample_size(result) == pytest.approx(3.0)

    def test_effective_sample_size_empty(self):
        from matching import MatchResult, effective_sample_size

        assert effective_sample_size(MatchResult((), ("T",))) == 0.0

    def test_match_weights_layout(self):
        from matching import MatchedSet, MatchResult, match_weights

        result = MatchResult((MatchedSet(1, ("T1", "T2"), ("C",), 0.2),), ("T3",))
        weights = match_weights(result, ["T1", "T3", "C", "X"])
        assert weights.tolist() == [1.0, 0.0, 2.0, 0.0]

    def test_summary(self):
        from matching import MatchedSet, MatchResult, summarize_match

        result = MatchResult((MatchedSet(1, ("T1",), ("C1",), 0.2),), ("T2",), ("C2",), 0.2)
        summary = summarize_match(result, n_treated=2)
        assert summary["unmatched_pct"] == 50.0
        assert summary["matched_controls"] == 1
