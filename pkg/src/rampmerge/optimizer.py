"""Search over merge decisions: NSGA-II for the Pareto set, PSO and SA on a scalarized cost."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .config import GaConfig, PsoConfig, SaConfig
from .merge import DecisionVector, Evaluation, MergeScene, VmcMode
from .objectives import ObjectiveVector, ScalarizationBounds, scalarized_cost

N_MODES = len(VmcMode)


@dataclass
class MergePlan:
    decision: DecisionVector
    objectives: ObjectiveVector
    feasible: bool
    rank: int = 0
    crowding: float = 0.0
    genome: Optional[tuple] = field(default=None, repr=False)

    @classmethod
    def from_eval(cls, ev: Evaluation, genome=None) -> "MergePlan":
        return cls(ev.decision, ev.objectives, ev.feasible, genome=genome)

    def minimized(self) -> np.ndarray:
        return np.asarray(self.objectives.minimized(), dtype=float)


# -- sorting ----------------------------------------------------------------------------

def dominates(a, b) -> bool:
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def non_dominated_fronts(F) -> list:
    """Fast non-dominated sorting on an (n, m) array of minimized objectives.

    Returns fronts as lists of row indices in ascending order.
    """
    F = np.asarray(F, dtype=float)
    n = len(F)
    if n == 0:
        return []
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(counts == 0)
    while len(current):
        fronts.append([int(i) for i in current])
        counts = counts - dom[current].sum(axis=0)
        counts[current] = -1
        current = np.flatnonzero(counts == 0)
    return fronts


def non_dominated_sort(plans: list) -> list:
    """Fronts of plans (lists of plans); also stores each plan's ``rank``."""
    if not plans:
        return []
    fronts = non_dominated_fronts(np.array([p.minimized() for p in plans]))
    out = []
    for r, idx in enumerate(fronts):
        for i in idx:
            plans[i].rank = r
        out.append([plans[i] for i in idx])
    return out


def crowding_distances(F) -> np.ndarray:
    """Crowding distance per row. Copies of one objective vector share the distance of
    that vector computed over the distinct vectors only."""
    F = np.asarray(F, dtype=float)
    if len(F) == 0:
        return np.zeros(0)
    U, inverse = np.unique(F, axis=0, return_inverse=True)
    n, m = U.shape
    if n <= 2:
        return np.full(len(F), np.inf)
    dist = np.zeros(n)
    for k in range(m):
        order = np.argsort(U[:, k], kind="stable")
        col = U[order, k]
        span = col[-1] - col[0]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span == 0:
            continue
        dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist[np.ravel(inverse)]


def crowding_distance(front: list) -> np.ndarray:
    if not front:
        raise ValueError("empty front")
    d = crowding_distances(np.array([p.minimized() for p in front]))
    for p, c in zip(front, d):
        p.crowding = float(c)
    return d


# -- genome helpers ---------------------------------------------------------------------

def _random_genome(rng, scene: MergeScene) -> tuple:
    d = scene.cfg.decision
    return (int(rng.integers(scene.n_gaps)), float(rng.uniform(d.t_min, d.t_max)),
            int(rng.integers(N_MODES)))


def _plan(scene: MergeScene, g: tuple) -> MergePlan:
    ev = scene.evaluate(DecisionVector(g[0], g[1], VmcMode(g[2])))
    return MergePlan.from_eval(ev, g)


def _sbx(rng, x1, x2, lo, hi, eta):
    """Bounded simulated binary crossover on one real gene."""
    if abs(x1 - x2) < 1e-14:
        return x1, x2
    y1, y2 = min(x1, x2), max(x1, x2)
    u = rng.random()
    out = []
    for beta_b in (1.0 + 2.0 * (y1 - lo) / (y2 - y1), 1.0 + 2.0 * (hi - y2) / (y2 - y1)):
        alpha = 2.0 - beta_b ** -(eta + 1.0)
        if u <= 1.0 / alpha:
            bq = (u * alpha) ** (1.0 / (eta + 1.0))
        else:
            bq = (1.0 / (2.0 - u * alpha)) ** (1.0 / (eta + 1.0))
        out.append(bq)
    c1 = 0.5 * ((y1 + y2) - out[0] * (y2 - y1))
    c2 = 0.5 * ((y1 + y2) + out[1] * (y2 - y1))
    c1, c2 = min(max(c1, lo), hi), min(max(c2, lo), hi)
    if rng.random() < 0.5:
        c1, c2 = c2, c1
    return c1, c2


def _poly_mutate(rng, x, lo, hi, eta):
    span = hi - lo
    d1, d2 = (x - lo) / span, (hi - x) / span
    u = rng.random()
    p = 1.0 / (eta + 1.0)
    if u < 0.5:
        q = (2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)) ** p - 1.0
    else:
        q = 1.0 - (2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)) ** p
    return min(max(x + q * span, lo), hi)


def _variation(rng, g1, g2, scene: MergeScene, cfg: GaConfig):
    d = scene.cfg.decision
    a, b = list(g1), list(g2)
    if rng.random() < cfg.crossover_prob:
        for k in (0, 2):
            if rng.random() < 0.5:
                a[k], b[k] = b[k], a[k]
        a[1], b[1] = _sbx(rng, a[1], b[1], d.t_min, d.t_max, cfg.eta_crossover)
    for child in (a, b):
        if rng.random() < cfg.mutation_prob:
            child[0] = int(rng.integers(scene.n_gaps))
        if rng.random() < cfg.mutation_prob:
            child[1] = _poly_mutate(rng, child[1], d.t_min, d.t_max, cfg.eta_mutation)
        if rng.random() < cfg.mutation_prob:
            child[2] = int(rng.integers(N_MODES))
    return tuple(a), tuple(b)


def _better(p: MergePlan, q: MergePlan) -> bool:
    return p.rank < q.rank or (p.rank == q.rank and p.crowding > q.crowding)


def _rank_population(pop: list) -> list:
    fronts = non_dominated_sort(pop)
    for f in fronts:
        crowding_distance(f)
    return fronts


def _truncate(pop: list, n: int) -> list:
    out = []
    for f in _rank_population(pop):
        if len(out) + len(f) <= n:
            out.extend(f)
            continue
        # first copies of each objective vector go before repeats so shared infinite
        # distances cannot push a distinct extreme out; stable order settles the rest
        seen: dict = {}
        copy = []
        for p in f:
            key = tuple(p.minimized())
            copy.append(seen.get(key, 0))
            seen[key] = copy[-1] + 1
        order = sorted(range(len(f)), key=lambda i: (copy[i] > 0, -f[i].crowding))
        out.extend(f[i] for i in order[: n - len(out)])
        break
    return out


def _unique_front(pop: list) -> list:
    front = [p for p in pop if p.rank == 0]
    seen = {}
    for p in front:
        seen.setdefault(p.decision.key(), p)
    return [seen[k] for k in sorted(seen)]


def nsga2_run(scene: MergeScene, cfg: GaConfig = GaConfig(), history: Optional[list] = None) -> list:
    """Elitist NSGA-II over (gap, merge_end_time, vmc_mode); returns the final front 0.

    ``history``, if given, receives per-generation best feasible value of each objective.
    """
    rng = np.random.default_rng(cfg.seed)
    pop = [_plan(scene, _random_genome(rng, scene)) for _ in range(cfg.population)]
    _rank_population(pop)
    _log_best(pop, history)
    for _ in range(cfg.generations):
        children = []
        while len(children) < cfg.population:
            parents = []
            for _ in range(2):
                i, j = rng.integers(len(pop), size=2)
                parents.append(pop[i] if not _better(pop[j], pop[i]) else pop[j])
            for g in _variation(rng, parents[0].genome, parents[1].genome, scene, cfg):
                children.append(_plan(scene, g))
        pop = _truncate(pop + children[: cfg.population], cfg.population)
        _log_best(pop, history)
    _rank_population(pop)
    return _unique_front(pop)


def _log_best(pop: list, history: Optional[list]) -> None:
    if history is None:
        return
    feas = [p for p in pop if p.feasible]
    if not feas:
        history.append(None)
        return
    F = np.array([p.minimized() for p in feas])
    history.append(tuple(F.min(axis=0)))


# -- scalarized baselines ---------------------------------------------------------------

@dataclass
class ScalarSearch:
    """Shared cost function of the single-objective baselines."""

    scene: MergeScene
    bounds: ScalarizationBounds = ScalarizationBounds()
    threshold: float = 4.0

    def cost(self, plan: MergePlan) -> float:
        return scalarized_cost(plan.objectives, self.bounds, plan.feasible, self.threshold)


def _scalar_search(scene: MergeScene) -> ScalarSearch:
    o = scene.cfg.objectives
    return ScalarSearch(scene, o.bounds, o.safety_threshold)


def _decode(x: np.ndarray, scene: MergeScene) -> tuple:
    gap = min(int(math.floor(x[0])), scene.n_gaps - 1)
    mode = min(int(math.floor(x[2])), N_MODES - 1)
    return (max(gap, 0), float(x[1]), max(mode, 0))


def pso_run(scene: MergeScene, cfg: PsoConfig = PsoConfig()) -> MergePlan:
    """Global-best PSO on a relaxed box; discrete genes are decoded by flooring."""
    rng = np.random.default_rng(cfg.seed)
    search = _scalar_search(scene)
    d = scene.cfg.decision
    lo = np.array([0.0, d.t_min, 0.0])
    hi = np.array([scene.n_gaps - 1e-9, d.t_max, N_MODES - 1e-9])
    n = cfg.particles
    x = lo + rng.random((n, 3)) * (hi - lo)
    vel = (rng.random((n, 3)) - 0.5) * (hi - lo) * 0.2
    plans = [_plan(scene, _decode(xi, scene)) for xi in x]
    cost = np.array([search.cost(p) for p in plans])
    pbest, pcost, pplan = x.copy(), cost.copy(), list(plans)
    g = int(np.argmin(pcost))
    for _ in range(cfg.iterations):
        r1, r2 = rng.random((n, 3)), rng.random((n, 3))
        vel = cfg.inertia * vel + cfg.cognitive * r1 * (pbest - x) + cfg.social * r2 * (pbest[g] - x)
        x = np.clip(x + vel, lo, hi)
        for i in range(n):
            p = _plan(scene, _decode(x[i], scene))
            c = search.cost(p)
            if c < pcost[i]:
                pbest[i], pcost[i], pplan[i] = x[i], c, p
        g = int(np.argmin(pcost))
    return pplan[g]


def sa_run(scene: MergeScene, cfg: SaConfig = SaConfig()) -> MergePlan:
    """Simulated annealing with geometric cooling; returns the best state visited."""
    rng = np.random.default_rng(cfg.seed)
    search = _scalar_search(scene)
    d = scene.cfg.decision
    g = _random_genome(rng, scene)
    cur = _plan(scene, g)
    cur_c = search.cost(cur)
    best, best_c = cur, cur_c
    temp = cfg.initial_temp
    for _ in range(cfg.iterations):
        gap, T, mode = g
        k = int(rng.integers(3))  # perturb one gene per move
        if k == 0:
            gap = int(rng.integers(scene.n_gaps))
        elif k == 1:
            T = float(min(max(T + rng.normal(0.0, cfg.step_time), d.t_min), d.t_max))
        else:
            mode = int(rng.integers(N_MODES))
        cand_g = (gap, T, mode)
        cand = _plan(scene, cand_g)
        c = search.cost(cand)
        delta = c - cur_c
        if delta <= 0 or (temp > 0 and rng.random() < math.exp(-delta / temp)):
            g, cur, cur_c = cand_g, cand, c
            if c < best_c:
                best, best_c = cand, c
        temp *= cfg.cooling
    return best


def grid_search(scene: MergeScene) -> list:
    """Every canonical decision of the scene, evaluated."""
    return [MergePlan.from_eval(scene.evaluate(dv), dv.key()) for dv in scene.decision_grid()]


def with_seed(cfg, seed: int):
    return replace(cfg, seed=seed)
