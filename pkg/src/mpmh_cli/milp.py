"""Exact scheduling model, its RLT linearization and small-scale solvers.

Variables are tuples keyed by kind:

* ``("a", h, k)`` hop h transmits in pairing k (binary)
* ``("delta", k)`` duration of pairing k in slots (integer)
* ``("s", h, k)`` stands for delta_k * a_hk after linearization
* ``("omega", h, g, k)`` stands for a_hk * a_gk after linearization, h < g

Hops are indexed by their position in :attr:`MilpInstance.hops`.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional

import numpy as np
from scipy.optimize import linprog

from .errors import ConfigurationError
from .mpmh import Pairing, Schedule, ScheduledHop, distribute_traffic, scheduled_hops
from .network import PathSet, Topology, is_matching
from .radio import AdjacencyOnly, BeamState, RadioModel, interference_gain, pairing_feasible, received_power

logger = logging.getLogger(__name__)

Var = tuple
Point = dict

TOLERANCE = 1e-6
METHODS = ("auto", "branch_and_bound", "enumeration")


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class VarDomain:
    lower: float
    upper: float
    integer: bool = True


@dataclass(frozen=True)
class Constraint:
    name: str
    sense: str
    rhs: float
    linear: Mapping[Var, float] = field(default_factory=dict)
    bilinear: Mapping[tuple[Var, Var], float] = field(default_factory=dict)

    def lhs(self, point: Mapping[Var, float]) -> float:
        value = sum(coef * point.get(var, 0.0) for var, coef in self.linear.items())
        value += sum(coef * point.get(u, 0.0) * point.get(v, 0.0) for (u, v), coef in self.bilinear.items())
        return value

    def satisfied(self, point: Mapping[Var, float], tol: float = TOLERANCE) -> bool:
        lhs = self.lhs(point)
        scale = max(1.0, abs(self.rhs))
        if self.sense == "<=":
            return lhs <= self.rhs + tol * scale
        if self.sense == ">=":
            return lhs >= self.rhs - tol * scale
        return abs(lhs - self.rhs) <= tol * scale


@dataclass(frozen=True)
class MilpInstance:
    form: str
    hops: tuple[ScheduledHop, ...]
    k: int
    d_tilde: int
    max_links: int
    variables: Mapping[Var, VarDomain]
    objective: Mapping[Var, float]
    constraints: tuple[Constraint, ...]
    topology: Topology = field(compare=False, repr=False)
    radio: RadioModel = field(compare=False, repr=False)

    @property
    def is_linear(self) -> bool:
        return all(not c.bilinear for c in self.constraints)

    def hop_index(self, hop: ScheduledHop) -> int:
        key = (hop.flow_id, hop.path_index, hop.hop_index)
        for index, candidate in enumerate(self.hops):
            if (candidate.flow_id, candidate.path_index, candidate.hop_index) == key:
                return index
        raise KeyError(f"hop {hop} is not part of this instance")

    def paths(self) -> list[list[int]]:
        """Hop indices grouped per path, in hop order."""
        grouped: dict[tuple[int, int], list[int]] = {}
        for index, hop in enumerate(self.hops):
            grouped.setdefault(hop.path_key, []).append(index)
        return [sorted(indices, key=lambda i: self.hops[i].hop_index) for _, indices in sorted(grouped.items())]


@dataclass(frozen=True)
class SolveBudget:
    node_limit: int = 20000
    time_limit_s: float = 60.0


@dataclass(frozen=True)
class MilpSolution:
    status: SolveStatus
    objective: Optional[int] = None
    assignment: Mapping[Var, float] = field(default_factory=dict)
    method: str = ""
    nodes: int = 0
    bound: Optional[float] = None


def a_var(h: int, k: int) -> Var:
    return ("a", h, k)


def delta_var(k: int) -> Var:
    return ("delta", k)


def _rate(hop: ScheduledHop) -> float:
    return float(hop.rate)


def build_p1(
    path_sets: Sequence[PathSet],
    topology: Topology,
    radio: RadioModel,
    k: Optional[int] = None,
) -> MilpInstance:
    """Bilinear model with the per-path splits fixed to those in `path_sets`."""
    per_path = scheduled_hops(path_sets)
    hops = tuple(hop for _, path in sorted(per_path.items()) for hop in path)
    if not hops:
        raise ConfigurationError("nothing to schedule: every path has a zero split")
    longest = max(len(path) for path in per_path.values())
    k = len(hops) if k is None else k
    if k < longest:
        raise ConfigurationError(f"K = {k} is below the longest path's {longest} hops; the model is infeasible")
    d_tilde = max(hop.weight for hop in hops)
    max_links = max(1, topology.n // 2)
    pairings = range(k)

    variables: dict[Var, VarDomain] = {}
    for h in range(len(hops)):
        for kk in pairings:
            variables[a_var(h, kk)] = VarDomain(0, 1)
    for kk in pairings:
        variables[delta_var(kk)] = VarDomain(0, d_tilde)
    objective = {delta_var(kk): 1.0 for kk in pairings}

    constraints: list[Constraint] = []
    for h, hop in enumerate(hops):
        constraints.append(Constraint(f"c6[h{h}]", "==", 1.0, {a_var(h, kk): 1.0 for kk in pairings}))
        constraints.append(
            Constraint(
                f"c8[h{h}]",
                ">=",
                float(hop.packets),
                bilinear={(delta_var(kk), a_var(h, kk)): _rate(hop) for kk in pairings},
            )
        )

    instance_paths = [
        [h for h, hop in enumerate(hops) if hop.path_key == key] for key in sorted(per_path)
    ]
    for path in instance_paths:
        flow_id, path_index = hops[path[0]].path_key
        for kk in pairings:
            constraints.append(
                Constraint(f"c10[p{flow_id}.{path_index},k{kk}]", "<=", 1.0, {a_var(h, kk): 1.0 for h in path})
            )
        for earlier, later in zip(path, path[1:]):
            for k_star in pairings:
                terms: dict[Var, float] = {a_var(later, kk): 1.0 for kk in range(k_star + 1)}
                for kk in range(k_star):
                    terms[a_var(earlier, kk)] = -1.0
                constraints.append(Constraint(f"c12[h{later},K{k_star}]", "<=", 0.0, terms))

    nodes = sorted({node for hop in hops for node in hop.link})
    for kk in pairings:
        for node in nodes:
            touching = {a_var(h, kk): 1.0 for h, hop in enumerate(hops) if node in hop.link}
            if len(touching) > 1:
                constraints.append(Constraint(f"c11[{node},k{kk}]", "<=", 1.0, touching))
        constraints.append(
            Constraint(f"c11size[k{kk}]", "<=", float(max_links), {a_var(h, kk): 1.0 for h in range(len(hops))})
        )

    if not isinstance(radio.beam_policy, AdjacencyOnly):
        constraints.extend(_sinr_constraints(hops, topology, radio, pairings))

    return MilpInstance("P1", hops, k, d_tilde, max_links, variables, objective, tuple(constraints), topology, radio)


def _sinr_constraints(
    hops: Sequence[ScheduledHop], topology: Topology, radio: RadioModel, pairings: range
) -> Iterator[Constraint]:
    # normalized by the noise power so coefficients stay near SNR scale
    noise = radio.noise_mw
    links = [topology.radio_link(hop.link, hop.rate) for hop in hops]
    for h, victim in enumerate(links):
        threshold = radio.min_sinr(victim.rate)
        own = received_power(radio, victim.length) / noise - threshold
        gains = {}
        for g, interferer in enumerate(links):
            if g == h or set(interferer.nodes) & set(victim.nodes):
                continue
            gain = interference_gain(radio, interferer, victim, BeamState.for_links([interferer, victim]))
            if gain > 0:
                gains[g] = gain / noise
        for kk in pairings:
            bilinear = {(a_var(h, kk), a_var(g, kk)): -threshold * radio.mui_factor * gain for g, gain in gains.items()}
            yield Constraint(f"c13[h{h},k{kk}]", ">=", 0.0, {a_var(h, kk): own}, bilinear)


def _product_var(u: Var, v: Var) -> Var:
    if u[0] == "delta" or v[0] == "delta":
        a = v if u[0] == "delta" else u
        return ("s", a[1], a[2])
    h, g = sorted((u[1], v[1]))
    return ("omega", h, g, u[2])


def linearize_rlt(p1: MilpInstance) -> MilpInstance:
    """Replace every bilinear product with a new variable and its bound-factor constraints."""
    if p1.form == "P2":
        return p1
    variables = dict(p1.variables)
    added: list[Constraint] = []
    constraints: list[Constraint] = []
    renames = {"c8": "c19", "c13": "c20"}

    for constraint in p1.constraints:
        if not constraint.bilinear:
            constraints.append(constraint)
            continue
        linear = dict(constraint.linear)
        for (u, v), coef in constraint.bilinear.items():
            product = _product_var(u, v)
            if product not in variables:
                variables[product] = _add_bound_factors(product, u, v, p1.d_tilde, added)
            linear[product] = linear.get(product, 0.0) + coef
        prefix, _, rest = constraint.name.partition("[")
        name = f"{renames.get(prefix, prefix)}[{rest}"
        constraints.append(Constraint(name, constraint.sense, constraint.rhs, linear))

    return replace(p1, form="P2", variables=variables, constraints=tuple(constraints + added))


def _add_bound_factors(product: Var, u: Var, v: Var, d_tilde: int, out: list[Constraint]) -> VarDomain:
    tag = ",".join(map(str, product[1:]))
    if product[0] == "s":
        delta, a = (u, v) if u[0] == "delta" else (v, u)
        # (delta - 0)(a - 0), (D - delta)(1 - a), (delta - 0)(1 - a), (D - delta)(a - 0)
        out.append(Constraint(f"c15a[{tag}]", ">=", 0.0, {product: 1.0}))
        out.append(Constraint(f"c15b[{tag}]", ">=", -d_tilde, {product: 1.0, delta: -1.0, a: -float(d_tilde)}))
        out.append(Constraint(f"c15c[{tag}]", ">=", 0.0, {delta: 1.0, product: -1.0}))
        out.append(Constraint(f"c15d[{tag}]", ">=", 0.0, {a: float(d_tilde), product: -1.0}))
        return VarDomain(0, d_tilde)
    first, second = ("a", product[1], product[3]), ("a", product[2], product[3])
    out.append(Constraint(f"c17a[{tag}]", ">=", 0.0, {product: 1.0}))
    out.append(Constraint(f"c17b[{tag}]", ">=", -1.0, {product: 1.0, first: -1.0, second: -1.0}))
    out.append(Constraint(f"c17c[{tag}]", ">=", 0.0, {first: 1.0, product: -1.0}))
    out.append(Constraint(f"c17d[{tag}]", ">=", 0.0, {second: 1.0, product: -1.0}))
    return VarDomain(0, 1)


def evaluate(instance: MilpInstance, point: Mapping[Var, float]) -> list[str]:
    """Names of violated constraints and domain checks at `point`."""
    violated = []
    for var, domain in instance.variables.items():
        value = point.get(var, 0.0)
        if value < domain.lower - TOLERANCE or value > domain.upper + TOLERANCE:
            violated.append(f"bounds{list(var)}")
        elif domain.integer and abs(value - round(value)) > TOLERANCE:
            violated.append(f"integrality{list(var)}")
    violated.extend(c.name for c in instance.constraints if not c.satisfied(point))
    return violated


def objective_value(instance: MilpInstance, point: Mapping[Var, float]) -> float:
    return sum(coef * point.get(var, 0.0) for var, coef in instance.objective.items())


def expand_point(p2: MilpInstance, point: Mapping[Var, float]) -> Point:
    """Map a P1 point to P2 by filling every product variable."""
    expanded = dict(point)
    for var in p2.variables:
        if var[0] == "s":
            expanded[var] = point.get(delta_var(var[2]), 0.0) * point.get(a_var(var[1], var[2]), 0.0)
        elif var[0] == "omega":
            expanded[var] = point.get(a_var(var[1], var[3]), 0.0) * point.get(a_var(var[2], var[3]), 0.0)
    return expanded


def schedule_to_point(instance: MilpInstance, schedule: Schedule) -> Point:
    """P1 point of a schedule whose pairings fit within the instance's K."""
    if schedule.k > instance.k:
        raise ValueError(f"schedule has {schedule.k} pairings, instance allows {instance.k}")
    point: Point = dict.fromkeys(instance.variables, 0.0)
    for kk, pairing in enumerate(schedule.pairings):
        point[delta_var(kk)] = float(pairing.delta)
        for hop in pairing.hops:
            point[a_var(instance.hop_index(hop), kk)] = 1.0
    if instance.form == "P2":
        point = expand_point(instance, point)
    return point


def _point_from_pairings(instance: MilpInstance, groups: Sequence[Sequence[int]]) -> Point:
    point: Point = {var: 0.0 for var in instance.variables}
    for kk, group in enumerate(groups):
        point[delta_var(kk)] = float(max((instance.hops[h].weight for h in group), default=0))
        for h in group:
            point[a_var(h, kk)] = 1.0
    if instance.form == "P2":
        point = expand_point(instance, point)
    return point


def solution_to_schedule(instance: MilpInstance, solution: MilpSolution) -> Schedule:
    if solution.objective is None:
        raise ValueError(f"no assignment to convert (status {solution.status.value})")
    pairings = []
    for kk in range(instance.k):
        members = [h for h in range(len(instance.hops)) if solution.assignment.get(a_var(h, kk), 0.0) > 0.5]
        if not members:
            continue
        members.sort(key=lambda h: (instance.hops[h].flow_id, instance.hops[h].path_index, instance.hops[h].hop_index))
        pairings.append(
            Pairing(tuple(instance.hops[h] for h in members), round(solution.assignment[delta_var(kk)]))
        )
    return Schedule(tuple(pairings))


def lower_bound(instance: MilpInstance) -> int:
    """Slots forced by any single path or any single node."""
    path_bound = max(sum(instance.hops[h].weight for h in path) for path in instance.paths())
    per_node: dict[str, int] = {}
    for hop in instance.hops:
        for node in hop.link:
            per_node[node] = per_node.get(node, 0) + hop.weight
    return max(path_bound, max(per_node.values()))


def to_lp_format(instance: MilpInstance) -> str:
    """CPLEX LP text of the linear model, for cross-checking with external solvers."""
    model = linearize_rlt(instance)

    def name(var: Var) -> str:
        return "_".join(map(str, var))

    def terms(coefs: Mapping[Var, float]) -> str:
        parts = []
        for var, coef in coefs.items():
            if coef == 0:
                continue
            sign = "-" if coef < 0 else "+"
            parts.append(f"{sign} {abs(coef):.12g} {name(var)}")
        text = " ".join(parts) or "0 delta_0"
        return text[2:] if text.startswith("+ ") else text

    lines = [f"\\ {model.form}: {len(model.hops)} hops, K = {model.k}", "Minimize", f" obj: {terms(model.objective)}"]
    lines.append("Subject To")
    for c in model.constraints:
        sense = "=" if c.sense == "==" else c.sense
        label = c.name.replace("[", "(").replace("]", ")").replace(",", "_")
        lines.append(f" {label}: {terms(c.linear)} {sense} {c.rhs:.12g}")
    lines.append("Bounds")
    for var, domain in model.variables.items():
        lines.append(f" {domain.lower:g} <= {name(var)} <= {domain.upper:g}")
    binaries = [name(v) for v, d in model.variables.items() if d.integer and (d.lower, d.upper) == (0, 1) and v[0] == "a"]
    generals = [name(v) for v, d in model.variables.items() if d.integer and v[0] == "delta"]
    lines += ["Binaries", *(f" {v}" for v in binaries), "Generals", *(f" {v}" for v in generals), "End"]
    return "\n".join(lines) + "\n"


@dataclass
class _LinearArrays:
    names: list[Var]
    c: np.ndarray
    a_ub: Optional[np.ndarray]
    b_ub: Optional[np.ndarray]
    a_eq: Optional[np.ndarray]
    b_eq: Optional[np.ndarray]
    bounds: list[tuple[float, float]]

    @classmethod
    def from_instance(cls, instance: MilpInstance) -> _LinearArrays:
        if not instance.is_linear:
            raise ValueError("LP arrays need the linearized model")
        names = list(instance.variables)
        index = {var: i for i, var in enumerate(names)}
        c = np.zeros(len(names))
        for var, coef in instance.objective.items():
            c[index[var]] = coef
        ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
        for constraint in instance.constraints:
            row = np.zeros(len(names))
            for var, coef in constraint.linear.items():
                row[index[var]] += coef
            if constraint.sense == "<=":
                ub_rows.append(row)
                ub_rhs.append(constraint.rhs)
            elif constraint.sense == ">=":
                ub_rows.append(-row)
                ub_rhs.append(-constraint.rhs)
            else:
                eq_rows.append(row)
                eq_rhs.append(constraint.rhs)
        bounds = [(float(d.lower), float(d.upper)) for d in instance.variables.values()]
        return cls(
            names,
            c,
            np.array(ub_rows) if ub_rows else None,
            np.array(ub_rhs) if ub_rows else None,
            np.array(eq_rows) if eq_rows else None,
            np.array(eq_rhs) if eq_rows else None,
            bounds,
        )

    def solve(self, bounds: Optional[list[tuple[float, float]]] = None) -> Any:
        return linprog(
            self.c,
            A_ub=self.a_ub,
            b_ub=self.b_ub,
            A_eq=self.a_eq,
            b_eq=self.b_eq,
            bounds=bounds or self.bounds,
            method="highs",
        )


def lp_relaxation(instance: MilpInstance) -> Optional[float]:
    """Objective of the linear relaxation of the linearized model; None when infeasible."""
    result = _LinearArrays.from_instance(linearize_rlt(instance)).solve()
    return float(result.fun) if result.status == 0 else None


def _position_bounds(instance: MilpInstance, arrays: _LinearArrays) -> list[tuple[float, float]]:
    # hop i of an L-hop path can only sit in pairings i .. K-L+i
    bounds = list(arrays.bounds)
    index = {var: i for i, var in enumerate(arrays.names)}
    for path in instance.paths():
        for position, h in enumerate(path):
            earliest, latest = position, instance.k - len(path) + position
            for kk in range(instance.k):
                if kk < earliest or kk > latest:
                    bounds[index[a_var(h, kk)]] = (0.0, 0.0)
    return bounds


def _branch_and_bound(
    instance: MilpInstance, budget: SolveBudget, incumbent: Optional[Schedule] = None
) -> MilpSolution:
    p2 = linearize_rlt(instance)
    arrays = _LinearArrays.from_instance(p2)
    binaries = [i for i, var in enumerate(arrays.names) if var[0] == "a"]
    best_value = math.inf
    best_point: Optional[Point] = None
    if incumbent is not None and incumbent.k <= p2.k:
        point = schedule_to_point(p2, incumbent)
        if not evaluate(p2, point):
            best_value, best_point = objective_value(p2, point), point

    root_bound: Optional[float] = None
    stack = [_position_bounds(p2, arrays)]
    nodes = 0
    started = time.monotonic()
    timed_out = False
    while stack:
        if nodes >= budget.node_limit or time.monotonic() - started > budget.time_limit_s:
            timed_out = True
            break
        bounds = stack.pop()
        nodes += 1
        result = arrays.solve(bounds)
        if result.status != 0:
            continue
        if root_bound is None:
            root_bound = float(result.fun)
        if math.ceil(result.fun - TOLERANCE) >= best_value:
            continue
        x = result.x
        fractional = [i for i in binaries if min(x[i], 1 - x[i]) > TOLERANCE]
        if not fractional:
            groups = [[] for _ in range(p2.k)]
            for i in binaries:
                if x[i] > 0.5:
                    _, h, kk = arrays.names[i]
                    groups[kk].append(h)
            point = _point_from_pairings(p2, groups)
            value = objective_value(p2, point)
            if value < best_value and not evaluate(p2, point):
                best_value, best_point = value, point
            continue
        pick = min(fractional, key=lambda i: (-min(x[i], 1 - x[i]), arrays.names[i][2], arrays.names[i][1]))
        down, up = list(bounds), list(bounds)
        down[pick] = (0.0, 0.0)
        up[pick] = (1.0, 1.0)
        stack.append(down)
        stack.append(up)

    logger.debug("branch-and-bound explored %d nodes (root bound %s)", nodes, root_bound)
    objective = None if best_point is None else round(best_value)
    if timed_out:
        return MilpSolution(SolveStatus.TIMEOUT, objective, best_point or {}, "branch_and_bound", nodes, root_bound)
    if best_point is None:
        return MilpSolution(SolveStatus.INFEASIBLE, method="branch_and_bound", nodes=nodes, bound=root_bound)
    return MilpSolution(SolveStatus.OPTIMAL, objective, best_point, "branch_and_bound", nodes, root_bound)


class _BudgetExhausted(Exception):
    pass


def _enumerate(
    instance: MilpInstance, budget: SolveBudget, incumbent: Optional[Schedule] = None
) -> MilpSolution:
    """Exhaustive search over pairing sequences, memoized on per-path progress."""
    paths = instance.paths()
    links = [instance.topology.radio_link(hop.link, hop.rate) for hop in instance.hops]
    feasible: dict[frozenset[int], bool] = {}
    memo: dict[tuple[tuple[int, ...], int], tuple[float, Optional[tuple[int, ...]]]] = {}
    started = time.monotonic()
    counter = [0]

    def admissible(group: tuple[int, ...]) -> bool:
        key = frozenset(group)
        if key not in feasible:
            ok = len(group) <= instance.max_links and is_matching(instance.hops[h].link for h in group)
            feasible[key] = ok and pairing_feasible(instance.radio, [links[h] for h in group])
        return feasible[key]

    def best(cursor: tuple[int, ...], pairings_left: int) -> tuple[float, Optional[tuple[int, ...]]]:
        if all(c == len(path) for c, path in zip(cursor, paths)):
            return 0.0, None
        if pairings_left == 0:
            return math.inf, None
        state = (cursor, pairings_left)
        if state in memo:
            return memo[state]
        counter[0] += 1
        if counter[0] > budget.node_limit or time.monotonic() - started > budget.time_limit_s:
            raise _BudgetExhausted
        ready = [(p, path[c]) for p, (c, path) in enumerate(zip(cursor, paths)) if c < len(path)]
        answer: tuple[float, Optional[tuple[int, ...]]] = (math.inf, None)
        for size in range(1, len(ready) + 1):
            for chosen in itertools.combinations(ready, size):
                group = tuple(h for _, h in chosen)
                if not admissible(group):
                    continue
                advanced = list(cursor)
                for p, _ in chosen:
                    advanced[p] += 1
                rest, _ = best(tuple(advanced), pairings_left - 1)
                cost = max(instance.hops[h].weight for h in group) + rest
                if cost < answer[0]:
                    answer = (cost, group)
        memo[state] = answer
        return answer

    start = tuple(0 for _ in paths)
    try:
        total, _ = best(start, instance.k)
    except _BudgetExhausted:
        if incumbent is not None and incumbent.k <= instance.k:
            point = schedule_to_point(instance, incumbent)
            if not evaluate(instance, point):
                value = round(objective_value(instance, point))
                return MilpSolution(SolveStatus.TIMEOUT, value, point, "enumeration", counter[0])
        return MilpSolution(SolveStatus.TIMEOUT, method="enumeration", nodes=counter[0])
    if math.isinf(total):
        return MilpSolution(SolveStatus.INFEASIBLE, method="enumeration", nodes=counter[0])

    groups: list[tuple[int, ...]] = []
    cursor, left = start, instance.k
    while True:
        _, group = best(cursor, left)
        if group is None:
            break
        groups.append(group)
        advanced = list(cursor)
        for h in group:
            advanced[next(p for p, path in enumerate(paths) if h in path)] += 1
        cursor, left = tuple(advanced), left - 1
    point = _point_from_pairings(instance, groups)
    return MilpSolution(SolveStatus.OPTIMAL, round(total), point, "enumeration", counter[0])


def solve_exact(
    instance: MilpInstance,
    budget: Optional[SolveBudget] = None,
    method: str = "auto",
    incumbent: Optional[Schedule] = None,
    enumeration_max_hops: int = 8,
) -> MilpSolution:
    """Proven optimum of the model, or the best incumbent when the budget runs out.

    `method="auto"` enumerates pairing sequences up to `enumeration_max_hops`
    hops and runs LP-based branch-and-bound above that.
    """
    if method not in METHODS:
        raise ConfigurationError(f"method must be one of {', '.join(METHODS)}")
    budget = budget or SolveBudget()
    if method == "auto":
        method = "enumeration" if len(instance.hops) <= enumeration_max_hops else "branch_and_bound"
    if method == "enumeration":
        solution = _enumerate(instance, budget, incumbent)
    else:
        solution = _branch_and_bound(instance, budget, incumbent)
    if solution.status is SolveStatus.TIMEOUT:
        logger.warning("Exact solver (%s) hit its budget after %d nodes", solution.method, solution.nodes)
    return solution


def compositions(total: int, parts: int, granularity: int = 1) -> Iterator[tuple[int, ...]]:
    """Every split of `total` into `parts` non-negative multiples of `granularity`.

    A remainder that is not a multiple goes to the last part.
    """
    if parts < 1:
        raise ValueError("parts must be >= 1")
    if granularity < 1:
        raise ValueError("granularity must be >= 1")
    units, remainder = divmod(total, granularity)
    for bars in itertools.combinations(range(units + parts - 1), parts - 1):
        edges = (-1, *bars, units + parts - 1)
        split = [(b - a - 1) * granularity for a, b in zip(edges, edges[1:])]
        split[-1] += remainder
        yield tuple(split)


@dataclass(frozen=True)
class SplitSearchResult:
    path_sets: tuple[PathSet, ...]
    solution: MilpSolution
    instance: MilpInstance
    mode: str
    candidates: int


def split_search(
    path_sets: Sequence[PathSet],
    topology: Topology,
    radio: RadioModel,
    k: Optional[int] = None,
    granularity: int = 1,
    budget: Optional[SolveBudget] = None,
    method: str = "auto",
) -> SplitSearchResult:
    """Jointly optimize the per-path split by enumerating candidate splits.

    The proportional split is tried first; another split replaces it only
    when strictly better.
    """
    proportional = [ps.with_split(distribute_traffic(ps.paths, ps.demand)) for ps in path_sets]
    instance = build_p1(proportional, topology, radio, k)
    best_sets = tuple(proportional)
    best_solution = solve_exact(instance, budget, method)
    best_instance = instance
    if best_solution.status is not SolveStatus.OPTIMAL:
        return SplitSearchResult(best_sets, best_solution, best_instance, "proportional split only", 1)

    candidates = 1
    options = [list(compositions(ps.demand, len(ps.paths), granularity)) for ps in path_sets]
    for splits in itertools.product(*options):
        sets = [ps.with_split(split) for ps, split in zip(path_sets, splits)]
        if all(s.split == p.split for s, p in zip(sets, proportional)):
            continue
        candidates += 1
        try:
            candidate = build_p1(sets, topology, radio, k)
        except ConfigurationError:
            continue
        if lower_bound(candidate) >= best_solution.objective:
            continue
        solution = solve_exact(candidate, budget, method)
        if solution.status is SolveStatus.OPTIMAL and solution.objective < best_solution.objective:
            best_sets, best_solution, best_instance = tuple(sets), solution, candidate
    logger.debug("split search tried %d splits, best %d slots", candidates, best_solution.objective)
    return SplitSearchResult(best_sets, best_solution, best_instance, f"enumerated splits (granularity {granularity})", candidates)
