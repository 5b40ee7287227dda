"""Constrained assignment solver over the transportation polytope.

Minimizes sum(P * S) + sum of activated ambiguity penalties, where P is a
0/1 matrix whose row sums equal the thresholded row flags and whose column
sums equal the argmax-counted column quotas. Each penalty references two
(row, column) cells and fires only when both are selected — the classic
linearization with an auxiliary binary per pair, handled here by counting a
penalty the moment its second endpoint enters the partial assignment.

Search is depth-first branch-and-bound: the greedy argmax hint seeds the
incumbent, the lower bound adds each unassigned row's cheapest admissible
cost (penalties are nonnegative, so ignoring them keeps the bound valid),
and branching picks the row whose two cheapest admissible columns are
closest in cost. Budgets are deterministic node-expansion counts with a
secondary wall-clock cap; exhausting them returns the best incumbent with
optimal=False.

An exhaustive-enumeration oracle (brute_force) and a JSON problem dump
round-trip live alongside the solver.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .relations import AmbiguityPair

DEFAULT_MAX_EXPANSIONS = 5_000_000
DEFAULT_TIME_BUDGET = 30.0
ENUMERATION_CAP = 5_000_000


class InfeasibleProblem(ValueError):
    pass


class BudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class Penalty:
    """Fires when rows row_a/row_b are assigned to columns col_a/col_b together."""

    kind: str
    row_a: int
    col_a: int
    row_b: int
    col_b: int
    weight: float


def build_penalties(
    pairs: list[AmbiguityPair], costs: np.ndarray, gamma: float, tau: float
) -> list[Penalty]:
    """Penalty weight gamma * (S[i, i'] + S[j, j']) / tau per ambiguous quadruple."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    out = []
    for pair in pairs:
        i, j = pair.ui_pair
        ci, cj = pair.column_pair
        weight = gamma * (costs[i, ci] + costs[j, cj]) / tau
        out.append(Penalty(pair.kind, i, ci, j, cj, weight))
    return out


@dataclass
class AssignmentProblem:
    costs: np.ndarray  # (m, L) in [0, 1]
    row_flags: np.ndarray  # (m,) 0/1
    col_counts: np.ndarray  # (L,) nonnegative ints
    penalties: list[Penalty] = field(default_factory=list)
    gamma: float = 1.0
    tau: float = 1.0
    regime: str = "equality"  # "equality" | "inequality"
    sigma: float = 0.5  # inequality regime: per-match profit offset
    max_expansions: int = DEFAULT_MAX_EXPANSIONS
    time_budget: float = DEFAULT_TIME_BUDGET

    @property
    def m(self) -> int:
        return self.costs.shape[0]

    @property
    def n_cols(self) -> int:
        return self.costs.shape[1]

    def validate(self) -> None:
        if self.costs.ndim != 2:
            raise InfeasibleProblem("costs must be 2-D")
        if self.row_flags.shape != (self.m,) or self.col_counts.shape != (self.n_cols,):
            raise InfeasibleProblem("bounds shapes do not match the cost matrix")
        if np.any(self.col_counts < 0) or np.any(self.col_counts > self.m):
            raise InfeasibleProblem("column quotas must lie in [0, m]")
        if self.regime == "equality" and self.row_flags.sum() != self.col_counts.sum():
            raise InfeasibleProblem(
                f"row total {int(self.row_flags.sum())} != column total {int(self.col_counts.sum())}"
            )
        if self.regime not in ("equality", "inequality"):
            raise InfeasibleProblem(f"unknown regime {self.regime!r}")
        for p in self.penalties:
            if not (0 <= p.row_a < self.m and 0 <= p.row_b < self.m):
                raise InfeasibleProblem(f"penalty row out of range: {p}")
            if not (0 <= p.col_a < self.n_cols and 0 <= p.col_b < self.n_cols):
                raise InfeasibleProblem(f"penalty column out of range: {p}")
            if p.weight < 0:
                raise InfeasibleProblem(f"negative penalty weight: {p}")


@dataclass
class Assignment:
    matrix: np.ndarray  # (m, L) 0/1
    objective: float
    optimal: bool
    expansions: int
    wall_time: float
    activated_penalty_weight: float = 0.0
    activated_penalty_count: int = 0


def _penalty_index(penalties: list[Penalty]) -> dict[tuple[int, int], list[tuple[int, int, float]]]:
    index: dict[tuple[int, int], list[tuple[int, int, float]]] = {}
    for p in penalties:
        index.setdefault((p.row_a, p.col_a), []).append((p.row_b, p.col_b, p.weight))
        index.setdefault((p.row_b, p.col_b), []).append((p.row_a, p.col_a, p.weight))
    return index


def evaluate(problem: AssignmentProblem, assignment: dict[int, int]) -> tuple[float, float, int]:
    """(objective, activated penalty weight, activated count) for a row->col map."""
    base = sum(problem.costs[r, c] for r, c in assignment.items())
    if problem.regime == "inequality":
        base -= problem.sigma * len(assignment)
    pen_weight = 0.0
    pen_count = 0
    for p in problem.penalties:
        if assignment.get(p.row_a) == p.col_a and assignment.get(p.row_b) == p.col_b:
            pen_weight += p.weight
            pen_count += 1
    return base + pen_weight, pen_weight, pen_count


def _to_assignment(problem: AssignmentProblem, mapping: dict[int, int],
                   optimal: bool, expansions: int, wall: float) -> Assignment:
    matrix = np.zeros((problem.m, problem.n_cols), dtype=np.int8)
    for r, c in mapping.items():
        matrix[r, c] = 1
    objective, pen_weight, pen_count = evaluate(problem, mapping)
    return Assignment(
        matrix=matrix,
        objective=objective,
        optimal=optimal,
        expansions=expansions,
        wall_time=wall,
        activated_penalty_weight=pen_weight,
        activated_penalty_count=pen_count,
    )


def _greedy_hint(problem: AssignmentProblem, rows: list[int]) -> Optional[dict[int, int]]:
    capacity = problem.col_counts.astype(np.int64).copy()
    mapping: dict[int, int] = {}
    for r in rows:
        admissible = np.flatnonzero(capacity > 0)
        if len(admissible) == 0:
            return None
        best = admissible[np.argmin(problem.costs[r, admissible])]
        if problem.regime == "inequality" and problem.costs[r, best] - problem.sigma >= 0:
            continue  # skipping is at least as good for the hint
        mapping[r] = int(best)
        capacity[best] -= 1
    return mapping


def solve(problem: AssignmentProblem) -> Assignment:
    """Exact minimizer within budget; best incumbent with optimal=False otherwise."""
    problem.validate()
    start = time.perf_counter()
    rows = [int(i) for i in np.flatnonzero(problem.row_flags)]
    if not rows:
        if problem.regime == "equality" and problem.col_counts.sum() != 0:
            raise InfeasibleProblem("no matchable rows but positive column quotas")
        return _to_assignment(problem, {}, True, 0, time.perf_counter() - start)

    pen_index = _penalty_index(problem.penalties)
    costs = problem.costs
    skip_allowed = problem.regime == "inequality"
    match_offset = -problem.sigma if skip_allowed else 0.0

    best_mapping = _greedy_hint(problem, rows)
    best_obj = evaluate(problem, best_mapping)[0] if best_mapping is not None else float("inf")

    capacity = problem.col_counts.astype(np.int64).copy()
    assignment: dict[int, int] = {}
    expansions = 0
    truncated = False
    check_mask = 1023

    def penalty_delta(row: int, col: int) -> float:
        total = 0.0
        for other_row, other_col, weight in pen_index.get((row, col), ()):
            if assignment.get(other_row) == other_col:
                total += weight
        return total

    def row_options(row: int, admissible: np.ndarray) -> list[tuple[float, int]]:
        options = [(costs[row, c] + match_offset + penalty_delta(row, int(c)), int(c)) for c in admissible]
        if skip_allowed:
            options.append((0.0, -1))
        options.sort(key=lambda item: (item[0], item[1]))
        return options

    def search(pending: list[int], incurred: float) -> None:
        nonlocal best_mapping, best_obj, expansions, truncated
        if truncated:
            return
        if not pending:
            if incurred < best_obj:
                best_obj = incurred
                best_mapping = dict(assignment)
            return
        admissible = np.flatnonzero(capacity > 0)
        if len(admissible) == 0 and not skip_allowed:
            return
        bound = incurred
        if len(admissible) > 0:
            cheapest = costs[np.ix_(pending, admissible)].min(axis=1) + match_offset
            if skip_allowed:
                cheapest = np.minimum(cheapest, 0.0)
            bound += float(cheapest.sum())
        if bound >= best_obj:
            return

        # branch on the row whose greedy choice is most ambiguous
        branch_row = pending[0]
        branch_options = None
        branch_gap = float("inf")
        for r in pending:
            opts = row_options(r, admissible)
            gap = opts[1][0] - opts[0][0] if len(opts) >= 2 else float("inf")
            if gap < branch_gap:
                branch_gap = gap
                branch_row = r
                branch_options = opts
        if branch_options is None:
            branch_options = row_options(branch_row, admissible)
        remaining = [r for r in pending if r != branch_row]

        for delta, col in branch_options:
            expansions += 1
            if expansions > problem.max_expansions:
                truncated = True
                return
            if (expansions & check_mask) == 0 and time.perf_counter() - start > problem.time_budget:
                truncated = True
                return
            if col >= 0:
                assignment[branch_row] = col
                capacity[col] -= 1
            search(remaining, incurred + delta)
            if col >= 0:
                capacity[col] += 1
                del assignment[branch_row]
            if truncated:
                return

    search(rows, 0.0)
    wall = time.perf_counter() - start
    if best_mapping is None:
        raise BudgetExhausted("budget exhausted before any feasible assignment was found")
    return _to_assignment(problem, best_mapping, optimal=not truncated, expansions=expansions, wall=wall)


def brute_force(problem: AssignmentProblem) -> Assignment:
    """Independent oracle: exhaustive enumeration of all feasible assignments.

    Deterministic tie-break: rows are enumerated in index order with columns
    ascending (skip last), and only strict improvements replace the incumbent,
    so equal-objective solutions resolve to the first in enumeration order.
    """
    problem.validate()
    start = time.perf_counter()
    rows = [int(i) for i in np.flatnonzero(problem.row_flags)]
    options_per_row = problem.n_cols + (1 if problem.regime == "inequality" else 0)
    if options_per_row ** max(len(rows), 1) > ENUMERATION_CAP:
        raise ValueError(
            f"instance too large to enumerate: {options_per_row}^{len(rows)} assignments"
        )

    best_mapping: Optional[dict[int, int]] = None
    best_obj = float("inf")
    capacity = problem.col_counts.astype(np.int64).copy()
    assignment: dict[int, int] = {}
    visited = 0

    def recurse(k: int) -> None:
        nonlocal best_mapping, best_obj, visited
        if k == len(rows):
            if problem.regime == "equality" and np.any(capacity != 0):
                return
            visited += 1
            obj = evaluate(problem, assignment)[0]
            if obj < best_obj:
                best_obj = obj
                best_mapping = dict(assignment)
            return
        row = rows[k]
        for col in range(problem.n_cols):
            if capacity[col] > 0:
                capacity[col] -= 1
                assignment[row] = col
                recurse(k + 1)
                del assignment[row]
                capacity[col] += 1
        if problem.regime == "inequality":
            recurse(k + 1)

    recurse(0)
    if best_mapping is None:
        raise InfeasibleProblem("no feasible assignment exists")
    return _to_assignment(problem, best_mapping, optimal=True, expansions=visited,
                          wall=time.perf_counter() - start)


def problem_to_json(problem: AssignmentProblem) -> str:
    payload = {
        "costs": problem.costs.tolist(),
        "row_flags": problem.row_flags.tolist(),
        "col_counts": problem.col_counts.tolist(),
        "penalties": [
            {"kind": p.kind, "row_a": p.row_a, "col_a": p.col_a,
             "row_b": p.row_b, "col_b": p.col_b, "weight": p.weight}
            for p in problem.penalties
        ],
        "gamma": problem.gamma,
        "tau": problem.tau,
        "regime": problem.regime,
        "sigma": problem.sigma,
        "max_expansions": problem.max_expansions,
        "time_budget": problem.time_budget,
    }
    return json.dumps(payload, indent=2)


def problem_from_json(text: str) -> AssignmentProblem:
    data = json.loads(text)
    return AssignmentProblem(
        costs=np.array(data["costs"], dtype=np.float64),
        row_flags=np.array(data["row_flags"], dtype=np.int64),
        col_counts=np.array(data["col_counts"], dtype=np.int64),
        penalties=[Penalty(**p) for p in data["penalties"]],
        gamma=data["gamma"],
        tau=data["tau"],
        regime=data.get("regime", "equality"),
        sigma=data.get("sigma", 0.5),
        max_expansions=data.get("max_expansions", DEFAULT_MAX_EXPANSIONS),
        time_budget=data.get("time_budget", DEFAULT_TIME_BUDGET),
    )
