"""
Optimal full matching within a caliper, solved as a minimum-cost flow.

Full matching is solved here as a degree-constrained minimum-cost edge
cover of the bipartite caliper graph:

- every treated school with at least one control inside the caliper must be
  covered, by between 1 and max_controls_per_treated edges;
- a control may take up to max_treated_per_control edges, and covering it
  earns a reward larger than any achievable total distance, so the number of
  matched controls is maximised before distance is minimised;
- once distance is minimal, no chosen edge joins two units that both have
  other edges, so every component is a star: one treated with k controls or
  one control with k treated.

Network (integer costs, nodes and arcs added in sorted school-id order so
the network simplex result is reproducible)::

    source --(u-1, 0)--> treated_i      treated_i supplies 1 unit itself
    treated_i --(1, dist)--> control_j   caliper-feasible pairs only
    control_j --(1, -M)--> sink          reward for covering j
    control_j --(l-1, 0)--> spill_j --> sink   extra treated for j
    source --(n(u-1), 0)--> sink         unused source supply
"""

from typing import Dict, List, Tuple

import networkx as nx
import numpy as np

from mepscore_types import Dataset
from matching.results import (
    MatchedSet,
    MatchResult,
    MatchSpec,
    distance_units,
    empty_result,
    within_caliper,
)
from models.propensity import PsFit
from utils.exceptions import DataError
from utils.logging import get_logger

logger = get_logger(__name__)

_SOURCE = ("source",)
_SINK = ("sink",)


def _split_by_treatment(ps: PsFit, dataset: Dataset) -> Tuple[List[Tuple[str, float]], List[Tuple[str, float]]]:
    treated: List[Tuple[str, float]] = []
    controls: List[Tuple[str, float]] = []
    scored = set(ps.school_ids)
    missing = [r.school_id for r in dataset.records if r.school_id not in scored]
    if missing:
        raise DataError(f"no propensity score for schools: {', '.join(missing[:10])}")
    for record in dataset.records:
        logit = ps.logit_of(record.school_id)
        if not np.isfinite(logit):
            raise DataError(f"non-finite propensity logit for school {record.school_id}")
        (treated if record.treatment == 1 else controls).append((record.school_id, logit))
    return sorted(treated), sorted(controls)


def _feasible_edges(
    treated: List[Tuple[str, float]], controls: List[Tuple[str, float]], caliper: float
) -> Dict[str, List[Tuple[str, int, float]]]:
    """Caliper-feasible (control, cost, distance) lists keyed by treated id."""
    control_ids = [c for c, _ in controls]
    control_logits = np.array([v for _, v in controls], dtype=float)
    order = np.argsort(control_logits, kind="stable")
    sorted_logits = control_logits[order]

    edges: Dict[str, List[Tuple[str, int, float]]] = {}
    for tid, t_logit in treated:
        lo = np.searchsorted(sorted_logits, t_logit - caliper - 1e-9, side="left")
        hi = np.searchsorted(sorted_logits, t_logit + caliper + 1e-9, side="right")
        partners = sorted(int(k) for k in order[lo:hi])
        found = []
        for k in partners:
            c_logit = control_logits[k]
            if within_caliper(t_logit, c_logit, caliper):
                found.append((control_ids[k], distance_units(t_logit, c_logit), abs(t_logit - c_logit)))
        if found:
            edges[tid] = found
    return edges


def _build_network(
    edges: Dict[str, List[Tuple[str, int, float]]], controls: List[str], spec: MatchSpec
) -> nx.DiGraph:
    treated = sorted(edges)
    n_treated = len(treated)
    extra_supply = n_treated * (spec.max_controls_per_treated - 1)
    reward = sum(cost for found in edges.values() for _, cost, _ in found) + 1

    graph = nx.DiGraph()
    graph.add_node(_SOURCE, demand=-extra_supply)
    for tid in treated:
        graph.add_node(("t", tid), demand=-1)
    for cid in controls:
        graph.add_node(("c", cid), demand=0)
    graph.add_node(_SINK, demand=n_treated + extra_supply)

    for tid in treated:
        if spec.max_controls_per_treated > 1:
            graph.add_edge(_SOURCE, ("t", tid), capacity=spec.max_controls_per_treated - 1, weight=0)
        for cid, cost, _ in edges[tid]:
            graph.add_edge(("t", tid), ("c", cid), capacity=1, weight=cost)
    for cid in controls:
        graph.add_edge(("c", cid), _SINK, capacity=1, weight=-reward)
    graph.add_edge(_SOURCE, _SINK, capacity=extra_supply, weight=0)

    # Parallel arcs are not allowed in a DiGraph; route the extra control
    # capacity through an intermediate node
    if spec.max_treated_per_control > 1:
        for cid in controls:
            spill = ("spill", cid)
            graph.add_node(spill, demand=0)
            graph.add_edge(("c", cid), spill, capacity=spec.max_treated_per_control - 1, weight=0)
            graph.add_edge(spill, _SINK, capacity=spec.max_treated_per_control - 1, weight=0)
    return graph


def _prune_to_stars(chosen: List[Tuple[str, str]]) -> List[Tuple[str, str]]:
    """Drop edges whose endpoints are both covered elsewhere (zero-cost ties only)."""
    degree: Dict[Tuple[str, str], int] = {}
    for tid, cid in chosen:
        degree[("t", tid)] = degree.get(("t", tid), 0) + 1
        degree[("c", cid)] = degree.get(("c", cid), 0) + 1

    kept = []
    for tid, cid in chosen:
        if degree[("t", tid)] >= 2 and degree[("c", cid)] >= 2:
            degree[("t", tid)] -= 1
            degree[("c", cid)] -= 1
            continue
        kept.append((tid, cid))
    return kept


def _collect_sets(
    kept: List[Tuple[str, str]], logits: Dict[str, float]
) -> List[Tuple[Tuple[str, ...], Tuple[str, ...], float]]:
    treated_degree: Dict[str, int] = {}
    for tid, _ in kept:
        treated_degree[tid] = treated_degree.get(tid, 0) + 1

    by_center: Dict[Tuple[str, str], Tuple[List[str], List[str]]] = {}
    for tid, cid in kept:
        # A treated with several edges is a centre; otherwise the control is
        if treated_degree[tid] > 1:
            center = ("t", tid)
            group = by_center.setdefault(center, ([tid], []))
            group[1].append(cid)
        else:
            center = ("c", cid)
            group = by_center.setdefault(center, ([], [cid]))
            group[0].append(tid)

    sets = []
    for treated_ids, control_ids in by_center.values():
        treated_ids, control_ids = sorted(treated_ids), sorted(control_ids)
        distance = sum(abs(logits[t] - logits[c]) for t in treated_ids for c in control_ids)
        sets.append((tuple(treated_ids), tuple(control_ids), distance))
    sets.sort(key=lambda s: min(s[0] + s[1]))
    return sets


def full_match(ps: PsFit, dataset: Dataset, spec: MatchSpec) -> MatchResult:
    """
    Optimal full matching of treated to control schools on PS logits.

    Treated schools with no control inside the caliper are reported as
    unmatched; the rest are partitioned into sets respecting the ratio
    bounds. An infeasible ratio configuration yields ``feasible=False`` and
    no sets.

    Raises:
        DataError: No treated or no control schools, or missing scores
    """
    treated, controls = _split_by_treatment(ps, dataset)
    if not treated or not controls:
        raise DataError("full matching needs at least one treated and one control school")

    logits = dict(treated + controls)
    edges = _feasible_edges(treated, controls, spec.caliper_logits)
    unmatched_treated = [tid for tid, _ in treated if tid not in edges]
    reachable = sorted({cid for found in edges.values() for cid, _, _ in found})

    if not edges:
        logger.info("match_no_feasible_pairs", kind=ps.kind, caliper=spec.caliper_logits)
        return empty_result(spec, unmatched_treated, [c for c, _ in controls])

    graph = _build_network(edges, reachable, spec)
    try:
        _, flow = nx.network_simplex(graph)
    except nx.NetworkXUnfeasible:
        logger.warning(
            "match_infeasible",
            kind=ps.kind,
            caliper=spec.caliper_logits,
            max_controls=spec.max_controls_per_treated,
            max_treated=spec.max_treated_per_control,
        )
        return empty_result(spec, [t for t, _ in treated], [c for c, _ in controls], feasible=False)

    chosen = [
        (tid, cid)
        for tid in sorted(edges)
        for cid, _, _ in edges[tid]
        if flow[("t", tid)].get(("c", cid), 0) > 0
    ]
    kept = _prune_to_stars(chosen)
    raw_sets = _collect_sets(kept, logits)

    sets = tuple(
        MatchedSet(set_id=k + 1, treated=t_ids, controls=c_ids, distance=dist)
        for k, (t_ids, c_ids, dist) in enumerate(raw_sets)
    )
    matched_controls = {cid for s in sets for cid in s.controls}
    cost_units = sum(distance_units(logits[t], logits[c]) for t, c in kept)

    result = MatchResult(
        sets=sets,
        unmatched_treated=tuple(unmatched_treated),
        unmatched_controls=tuple(c for c, _ in controls if c not in matched_controls),
        total_distance=float(sum(s.distance for s in sets)),
        total_cost_units=cost_units,
        feasible=True,
        spec=spec,
    )
    logger.debug(
        "match_solved",
        kind=ps.kind,
        caliper=spec.caliper_logits,
        sets=len(sets),
        unmatched_treated=len(unmatched_treated),
        cost_units=cost_units,
    )
    return result
