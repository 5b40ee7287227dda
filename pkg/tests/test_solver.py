import numpy as np
import pytest

from uifuse.relations import AmbiguityPair
from uifuse.solver import (
    Assignment,
    AssignmentProblem,
    InfeasibleProblem,
    Penalty,
    brute_force,
    build_penalties,
    evaluate,
    problem_from_json,
    problem_to_json,
    solve,
)


def _problem(costs, row_flags, col_counts, penalties=(), **kwargs) -> AssignmentProblem:
    return AssignmentProblem(
        costs=np.array(costs, dtype=np.float64),
        row_flags=np.array(row_flags, dtype=np.int64),
        col_counts=np.array(col_counts, dtype=np.int64),
        penalties=list(penalties),
        **kwargs,
    )


def random_problem(rng: np.random.Generator, max_m: int = 6, max_cols: int = 4,
                   max_penalties: int = 4) -> AssignmentProblem:
    m = int(rng.integers(1, max_m + 1))
    L = int(rng.integers(1, max_cols + 1))
    costs = rng.uniform(0, 1, (m, L))
    row_flags = rng.integers(0, 2, m)
    total = int(row_flags.sum())
    col_counts = np.zeros(L, dtype=np.int64)
    for _ in range(total):
        col_counts[rng.integers(0, L)] += 1
    penalties = []
    for _ in range(int(rng.integers(0, max_penalties + 1))):
        if m < 2 or L < 2:
            break
        i, j = sorted(rng.choice(m, 2, replace=False))
        ci, cj = rng.choice(L, 2, replace=False)
        kind = "HIERARCHY" if rng.random() < 0.5 else "RENDERING"
        weight = float(rng.uniform(0, 1.5))
        penalties.append(Penalty(kind, int(i), int(ci), int(j), int(cj), weight))
    return _problem(costs, row_flags, col_counts, penalties)


def test_two_by_two_diagonal():
    # M = [[0.9, 0.2], [0.1, 0.7]] -> S = 1 - M^T
    S = 1.0 - np.array([[0.9, 0.2], [0.1, 0.7]]).T
    problem = _problem(S, [1, 1], [1, 1])
    result = solve(problem)
    oracle = brute_force(problem)
    assert result.objective == pytest.approx(0.1 + 0.3, abs=1e-12)
    assert oracle.objective == pytest.approx(result.objective, abs=1e-12)
    assert np.array_equal(result.matrix, np.eye(2, dtype=np.int8))
    assert result.optimal


def test_all_rows_unmatchable():
    problem = _problem(np.random.default_rng(0).uniform(0, 1, (3, 2)), [0, 0, 0], [0, 0])
    result = solve(problem)
    assert result.objective == 0.0
    assert result.matrix.sum() == 0
    assert result.optimal


def test_penalty_arithmetic_crossover():
    # One RENDERING ambiguity between the two cheap matches; weight (0.1+0.3)/2 = 0.2.
    base = np.array([[0.1, 0.5], [0.5, 0.3]])
    pen = [Penalty("RENDERING", 0, 0, 1, 1, (0.1 + 0.3) / 2.0)]
    problem = _problem(base, [1, 1], [1, 1], pen)
    result = solve(problem)
    # diag: 0.4 + 0.2 penalty = 0.6; anti-diag: 1.0 -> diag still wins
    assert result.objective == pytest.approx(0.6, abs=1e-12)
    assert result.matrix[0, 0] == 1 and result.matrix[1, 1] == 1
    assert result.activated_penalty_count == 1

    # make the alternative cheap enough that flipping beats the penalty
    base2 = np.array([[0.1, 0.15], [0.35, 0.3]])
    pen2 = [Penalty("RENDERING", 0, 0, 1, 1, (0.1 + 0.3) / 2.0)]
    problem2 = _problem(base2, [1, 1], [1, 1], pen2)
    result2 = solve(problem2)
    assert result2.matrix[0, 1] == 1 and result2.matrix[1, 0] == 1
    assert result2.activated_penalty_count == 0
    assert result2.objective == pytest.approx(0.5, abs=1e-12)


def test_single_cell():
    problem = _problem([[0.42]], [1], [1])
    result = brute_force(problem)
    assert result.matrix[0, 0] == 1
    assert result.objective == pytest.approx(0.42)


def test_large_penalty_forces_second_best():
    base = np.array([[0.0, 0.4], [0.4, 0.0]])
    pen = [Penalty("HIERARCHY", 0, 0, 1, 1, 2.5)]
    problem = _problem(base, [1, 1], [1, 1], pen)
    oracle = brute_force(problem)
    assert oracle.matrix[0, 1] == 1 and oracle.matrix[1, 0] == 1
    assert oracle.objective == pytest.approx(0.8)
    assert solve(problem).objective == pytest.approx(0.8)


def test_oracle_agreement_battery():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        problem = random_problem(rng)
        a = solve(problem)
        b = brute_force(problem)
        assert a.optimal
        assert abs(a.objective - b.objective) < 1e-9


def test_oracle_agreement_inequality_regime():
    rng = np.random.default_rng(7)
    for _ in range(60):
        problem = random_problem(rng)
        problem.regime = "inequality"
        a = solve(problem)
        b = brute_force(problem)
        assert abs(a.objective - b.objective) < 1e-9
        assert a.matrix.sum(axis=1).max(initial=0) <= 1
        assert np.all(a.matrix.sum(axis=0) <= problem.col_counts)


def test_feasibility_of_returned_matrix():
    rng = np.random.default_rng(99)
    for _ in range(50):
        problem = random_problem(rng)
        result = solve(problem)
        rows = result.matrix.sum(axis=1)
        assert np.array_equal(rows, problem.row_flags)  # Rule 1 + equality regime
        assert np.array_equal(result.matrix.sum(axis=0), problem.col_counts)
        assert result.matrix.sum() <= problem.m  # Rule 2


def test_infeasible_bounds_raise():
    with pytest.raises(InfeasibleProblem, match="row total"):
        solve(_problem([[0.1, 0.2]], [1], [0, 0]))
    with pytest.raises(InfeasibleProblem, match="quotas"):
        solve(_problem([[0.1, 0.2]], [1], [2, -1]))


def test_budget_exhaustion_returns_incumbent():
    rng = np.random.default_rng(5)
    m, L = 9, 4
    costs = rng.uniform(0, 1, (m, L))
    col_counts = np.zeros(L, dtype=np.int64)
    for _ in range(m):
        col_counts[rng.integers(0, L)] += 1
    penalties = [
        Penalty("HIERARCHY", i, ci, j, cj, 0.25)
        for i in range(m) for j in range(i + 1, m)
        for ci in range(L) for cj in range(L) if ci != cj
    ][:200]
    problem = _problem(costs, [1] * m, col_counts, penalties, max_expansions=50)
    result = solve(problem)
    assert not result.optimal
    assert result.matrix.sum() == m  # greedy hint is still feasible
    assert result.expansions <= 50 + 1


def test_gamma_monotonicity():
    # Optimal penalty mass is non-increasing in gamma; once a solution is
    # penalty-free, larger gamma keeps it penalty-free.
    rng = np.random.default_rng(31)
    instances = [random_problem(rng) for _ in range(40)]
    gammas = [0.0, 0.5, 1.0, 2.0, 5.0]
    prev_free = -1
    prev_masses = None
    for gamma in gammas:
        masses = []
        for inst in instances:
            scaled = AssignmentProblem(
                costs=inst.costs,
                row_flags=inst.row_flags,
                col_counts=inst.col_counts,
                penalties=[
                    Penalty(p.kind, p.row_a, p.col_a, p.row_b, p.col_b, gamma * p.weight)
                    for p in inst.penalties
                ],
                gamma=gamma,
            )
            result = solve(scaled)
            # measure raw (gamma-independent) activated mass
            raw = sum(
                p.weight
                for p in inst.penalties
                if result.matrix[p.row_a, p.col_a] == 1 and result.matrix[p.row_b, p.col_b] == 1
            )
            masses.append(raw)
        if prev_masses is not None:
            for prev, cur in zip(prev_masses, masses):
                assert cur <= prev + 1e-9
        free = sum(1 for mss in masses if mss == 0)
        assert free >= prev_free
        prev_free = free
        prev_masses = masses


def test_determinism_across_runs():
    rng = np.random.default_rng(12)
    problem = random_problem(rng)
    a = solve(problem)
    b = solve(problem)
    assert np.array_equal(a.matrix, b.matrix)
    assert a.expansions == b.expansions
    assert a.objective == b.objective


def test_brute_force_guards_size():
    costs = np.zeros((30, 4))
    with pytest.raises(ValueError, match="too large"):
        brute_force(_problem(costs, [1] * 30, [30, 0, 0, 0]))


def test_build_penalties_from_ambiguity_pairs():
    costs = np.array([[0.1, 0.9], [0.8, 0.3]])
    pairs = [AmbiguityPair("HIERARCHY", (0, 1), (0, 1)), AmbiguityPair("RENDERING", (0, 1), (1, 0))]
    penalties = build_penalties(pairs, costs, gamma=1.0, tau=2.0)
    assert penalties[0].weight == pytest.approx((0.1 + 0.3) / 2.0)
    assert penalties[1].weight == pytest.approx((0.9 + 0.8) / 2.0)
    with pytest.raises(ValueError):
        build_penalties(pairs, costs, gamma=1.0, tau=0.0)


def test_problem_json_round_trip():
    rng = np.random.default_rng(3)
    problem = random_problem(rng)
    text = problem_to_json(problem)
    clone = problem_from_json(text)
    assert np.array_equal(clone.costs, problem.costs)
    assert np.array_equal(clone.row_flags, problem.row_flags)
    assert np.array_equal(clone.col_counts, problem.col_counts)
    assert clone.penalties == problem.penalties
    assert solve(clone).objective == solve(problem).objective


def test_evaluate_matches_assignment_fields():
    rng = np.random.default_rng(17)
    problem = random_problem(rng)
    result = solve(problem)
    mapping = {int(r): int(np.argmax(result.matrix[r])) for r in np.flatnonzero(result.matrix.sum(axis=1))}
    objective, weight, count = evaluate(problem, mapping)
    assert objective == pytest.approx(result.objective)
    assert weight == pytest.approx(result.activated_penalty_weight)
    assert count == result.activated_penalty_count
