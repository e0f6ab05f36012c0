"""Evolutionary loss search with a progressive filter funnel, and two baselines.

One generation runs: property checks on every candidate, a short
convergence simulation on the survivors, a threshold cut, proxy training on
the top K, and top-P truncation selection.  Parents are carried into the
next population, so the best fitness never drops between generations.

All randomness in the evolutionary loop comes from one generator owned by
the orchestrator.  Stage work is a pure function of (DSL string, seed), so a
process pool changes wall time but never the outcome.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from autoloss import ops, simtask, zoo
from autoloss._io import atomic_write_text
from autoloss.expr import (
    Binary, Const, Input, LimitExceeded, Limits, LossExpr, Node, Unary,
    canonical_key, leaves, normalize_branch, parse, random_expr, random_node,
    replace_subtree, to_string,
)
from autoloss.simtask import SimResult
from autoloss.verify import VerificationReport, check_validness, verify

__all__ = [
    "SearchConfig", "Candidate", "GenerationSummary", "GenerationLog", "SearchResult",
    "EmptyFunnel", "MUTATION_KINDS", "MUTATION_WEIGHTS",
    "random_candidate", "mutate", "mutate_traced", "crossover", "seed_population",
    "breed", "run_generation", "run_search", "run_vanilla_ea", "run_random_search",
    "run_bench",
]

MUTATION_KINDS = ("replace_node", "insert_unary", "delete_unary", "random_leaf", "graft")
MUTATION_WEIGHTS = (0.4, 0.2, 0.2, 0.1, 0.1)
GRAFT_MAX = 5
RETRY_CAP = 10
RELAX_FACTOR = 0.9

# inputs a loss must read for its value to depend on the model output
SCORE_INPUTS = {"cls": frozenset("x"), "reg": frozenset("iue")}

INITIAL_LOSS = {"cls": "CEI", "reg": "GIoU"}
DEFAULT_N = {"cls": 10000, "reg": 1000}


class EmptyFunnel(RuntimeError):
    """No candidate survived to selection."""


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class SearchConfig:
    branch: str
    E: int = 5
    N: int | None = None
    P: int = 3
    K: int = 10
    p1: float = 0.5
    p2: float = 0.2
    initial_loss: str | None = None
    seed: int = 0
    data_seed: int = 0
    max_nodes: int = 40
    max_depth: int = 10
    sim_steps: int = simtask.SIM_STEPS
    proxy_steps: int = simtask.PROXY_STEPS
    proxy_batch: int = simtask.PROXY_BATCH
    workers: int = 1

    def __post_init__(self):
        branch = normalize_branch(self.branch)
        object.__setattr__(self, "branch", branch)
        if self.N is None:
            object.__setattr__(self, "N", DEFAULT_N[branch])
        if self.initial_loss is None:
            object.__setattr__(self, "initial_loss", INITIAL_LOSS[branch])
        if not 1 <= self.P <= self.K <= self.N:
            raise ValueError(f"need 1 <= P <= K <= N, got P={self.P}, K={self.K}, N={self.N}")
        for name in ("p1", "p2"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        for name in ("E", "max_nodes", "max_depth", "sim_steps", "proxy_steps", "proxy_batch",
                     "workers"):
            if getattr(self, name) < (0 if name == "E" else 1):
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        loss = zoo.get(self.initial_loss)
        if loss.branch != branch:
            raise ValueError(f"initial loss {loss.name} is a {loss.branch} loss, not {branch}")
        object.__setattr__(self, "initial_loss", loss.name)

    @property
    def limits(self) -> Limits:
        return Limits(self.max_nodes, self.max_depth)

    @property
    def initial(self) -> LossExpr:
        return parse(zoo.get(self.initial_loss).dsl, self.branch, self.limits)


# -- candidates and logs ------------------------------------------------------

@dataclass
class Candidate:
    expr: LossExpr
    generation: int = 0
    lineage: tuple[str, ...] = ()
    report: VerificationReport | None = None
    sim: SimResult | None = None
    fitness: float | None = None
    key: str = field(init=False)

    def __post_init__(self):
        self.key = canonical_key(self.expr)

    @property
    def dsl(self) -> str:
        return to_string(self.expr)

    @property
    def stage(self) -> str:
        if self.fitness is not None:
            return "proxy"
        if self.sim is not None:
            return "simulate"
        if self.report is not None:
            return "verify"
        return "seeded"


@dataclass
class GenerationSummary:
    gen: int
    n_seeded: int
    n_valid: int
    n_property_pass: int
    n_simulated: int
    n_proxy: int
    best_sim: float
    best_fitness: float
    threshold: float

    FIELDS = ("gen", "n_seeded", "n_valid", "n_property_pass", "n_simulated", "n_proxy",
              "best_sim", "best_fitness", "threshold")

    def row(self) -> list:
        return [getattr(self, f) for f in self.FIELDS]


@dataclass
class GenerationLog:
    """Per-candidate stage records plus one summary per generation."""

    records: list[dict] = field(default_factory=list)
    summaries: list[GenerationSummary] = field(default_factory=list)
    parents: list[list[str]] = field(default_factory=list)
    proxy_calls: int = 0

    def add(self, gen: int, expr: str | None, stage: str, value, passed: bool, millis: float):
        self.records.append({"gen": gen, "expr": expr, "stage": stage, "value": value,
                             "pass": bool(passed), "millis": round(float(millis), 3)})

    def extend(self, other: "GenerationLog") -> None:
        self.records.extend(other.records)
        self.summaries.extend(other.summaries)
        self.parents.extend(other.parents)
        self.proxy_calls += other.proxy_calls

    def to_jsonl(self, timings: bool = True) -> str:
        out = []
        for rec in self.records:
            if not timings:
                rec = {**rec, "millis": 0.0}
            out.append(json.dumps(rec, sort_keys=True))
        return "".join(line + "\n" for line in out)

    def summary_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(GenerationSummary.FIELDS)
        for s in self.summaries:
            writer.writerow(s.row())
        return buf.getvalue()

    def stage_count(self, gen: int, stage: str) -> int:
        return sum(1 for r in self.records if r["gen"] == gen and r["stage"] == stage)


class SearchResult(NamedTuple):
    best: Candidate | None
    log: GenerationLog


# -- variation operators ------------------------------------------------------

def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def references_score(expr: LossExpr) -> bool:
    return bool(expr.symbols() & SCORE_INPUTS[expr.branch])


def random_candidate(branch: str, rng, limits: Limits = Limits(), max_tries: int = 10000) -> LossExpr:
    """A random tree that reads at least one score input.

    Trees without one are constant in the model output and pass the
    property checks vacuously, so they are redrawn.
    """
    branch = normalize_branch(branch)
    rng = _rng(rng)
    for _ in range(max_tries):
        e = random_expr(branch, rng, limits.max_nodes, limits)
        if references_score(e):
            return e
    raise RuntimeError("could not draw a tree that reads a score input")


def _same_arity_choices(node: Node, branch: str) -> list[Node]:
    allowed = ops.registry(branch)
    if isinstance(node, (Input, Const)):
        return [leaf for leaf in leaves(branch) if leaf != node]
    if isinstance(node, Unary):
        return [Unary(op, node.child) for op in ops.UNARY_OPS if op in allowed and op != node.op]
    return [Binary(op, node.left, node.right)
            for op in ops.BINARY_OPS if op in allowed and op != node.op]


def replace_node(e: LossExpr, at: int, rng, limits: Limits = Limits()) -> LossExpr:
    """Swap the symbol at ``at`` for another of the same arity."""
    rng = _rng(rng)
    choices = _same_arity_choices(e.node_at(at), e.branch)
    if not choices:
        return e
    return replace_subtree(e, at, choices[int(rng.integers(len(choices)))], limits)


def insert_unary(e: LossExpr, at: int, op: str, limits: Limits = Limits()) -> LossExpr:
    return replace_subtree(e, at, Unary(op, e.node_at(at)), limits)


def delete_unary(e: LossExpr, at: int, limits: Limits = Limits()) -> LossExpr:
    node = e.node_at(at)
    if not isinstance(node, Unary):
        raise ValueError(f"node {at} is not a unary operator")
    return replace_subtree(e, at, node.child, limits)


def _unary_refs(e: LossExpr) -> list[int]:
    return [k for k, n in enumerate(e.nodes()) if isinstance(n, Unary)]


def _apply(kind: str, e: LossExpr, rng: np.random.Generator, limits: Limits) -> LossExpr:
    branch = e.branch
    if kind == "delete_unary":
        refs = _unary_refs(e)
        if not refs:
            return e
        return delete_unary(e, refs[int(rng.integers(len(refs)))], limits)
    at = int(rng.integers(e.size))
    if kind == "replace_node":
        return replace_node(e, at, rng, limits)
    if kind == "insert_unary":
        unary = [op for op in ops.UNARY_OPS if op in ops.registry(branch)]
        return insert_unary(e, at, unary[int(rng.integers(len(unary)))], limits)
    if kind == "random_leaf":
        pool = leaves(branch)
        return replace_subtree(e, at, pool[int(rng.integers(len(pool)))], limits)
    if kind == "graft":
        budget = int(rng.integers(1, GRAFT_MAX + 1))
        return replace_subtree(e, at, random_node(branch, rng, budget, limits.max_depth), limits)
    raise ValueError(f"unknown mutation {kind!r}")


def mutate_traced(e: LossExpr, rng, limits: Limits = Limits()) -> tuple[LossExpr, str]:
    """Apply one weighted mutation; returns the child and the kind drawn.

    A child that breaks the limits, or a kind with nothing to act on, yields
    the parent unchanged.
    """
    rng = _rng(rng)
    kind = MUTATION_KINDS[int(rng.choice(len(MUTATION_KINDS), p=MUTATION_WEIGHTS))]
    try:
        return _apply(kind, e, rng, limits), kind
    except LimitExceeded:
        return e, kind


def mutate(e: LossExpr, rng, limits: Limits = Limits()) -> LossExpr:
    return mutate_traced(e, rng, limits)[0]


def crossover(a: LossExpr, b: LossExpr, rng, limits: Limits = Limits(),
              points: tuple[int, int] | None = None) -> tuple[LossExpr, LossExpr]:
    """Exchange uniformly chosen subtrees of ``a`` and ``b``."""
    if a.branch != b.branch:
        raise ValueError("crossover needs two expressions of the same branch")
    rng = _rng(rng)
    if points is None:
        points = (int(rng.integers(a.size)), int(rng.integers(b.size)))
    pa, pb = points
    sa, sb = a.node_at(pa), b.node_at(pb)
    try:
        child_a = replace_subtree(a, pa, sb, limits)
    except LimitExceeded:
        child_a = a
    try:
        child_b = replace_subtree(b, pb, sa, limits)
    except LimitExceeded:
        child_b = b
    return child_a, child_b


# -- populations --------------------------------------------------------------

def seed_population(initial: LossExpr, N: int, rng, mutations: tuple[int, int] = (1, 3),
                    limits: Limits = Limits()) -> list[LossExpr]:
    """``N`` mutants of ``initial``, each from a random number of mutations in ``mutations``.

    Duplicate keys are redrawn up to a retry cap, then admitted.
    """
    rng = _rng(rng)
    lo, hi = mutations
    seen: set[str] = set()
    out = []
    for _ in range(N):
        for attempt in range(RETRY_CAP + 1):
            child = initial
            for _ in range(int(rng.integers(lo, hi + 1))):
                child = mutate(child, rng, limits)
            key = canonical_key(child)
            if key not in seen or attempt == RETRY_CAP:
                break
        seen.add(key)
        out.append(child)
    return out


def breed(parents: Sequence[LossExpr], N: int, config: SearchConfig, rng) -> list[LossExpr]:
    """Parents first, then offspring from random parent pairs up to ``N``."""
    rng = _rng(rng)
    limits = config.limits
    population = list(parents)[:N]
    seen = {canonical_key(p) for p in population}
    while len(population) < N:
        for attempt in range(RETRY_CAP + 1):
            i, j = rng.integers(len(parents), size=2)
            child = parents[int(i)]
            if rng.random() < config.p1:
                child = crossover(parents[int(i)], parents[int(j)], rng, limits)[0]
            if rng.random() < config.p2:
                child = mutate(child, rng, limits)
            key = canonical_key(child)
            if key not in seen or attempt == RETRY_CAP:
                break
        seen.add(key)
        population.append(child)
    return population


# -- stage workers (module level so a process pool can pickle them) ----------

def _parse(dsl: str, branch: str, limits: tuple[int, int]) -> LossExpr:
    return parse(dsl, branch, Limits(*limits))


def _verify_task(args) -> VerificationReport:
    dsl, branch, limits = args
    return verify(_parse(dsl, branch, limits))


def _validness_task(args) -> tuple[bool, str | None, float]:
    dsl, branch, limits = args
    start = time.perf_counter()
    ok, probe = check_validness(_parse(dsl, branch, limits))
    return ok, probe, (time.perf_counter() - start) * 1e3


def _simulate_task(args) -> tuple[SimResult, float]:
    dsl, branch, limits, seed, steps, data_seed = args
    start = time.perf_counter()
    res = simtask.simulate(_parse(dsl, branch, limits), branch, seed, steps, data_seed)
    return res, (time.perf_counter() - start) * 1e3


def _proxy_task(args) -> tuple[SimResult, float]:
    dsl, branch, limits, seed, steps, batch, data_seed = args
    start = time.perf_counter()
    res = simtask.proxy_result(_parse(dsl, branch, limits), branch, seed, steps, batch, data_seed)
    return res, (time.perf_counter() - start) * 1e3


class _Stages:
    """Cached, optionally parallel stage evaluation keyed by canonical key."""

    def __init__(self, config: SearchConfig, executor: ProcessPoolExecutor | None = None):
        self.config = config
        self.executor = executor
        self.limits = (config.max_nodes, config.max_depth)
        self.reports: dict[str, VerificationReport] = {}
        self.valid: dict[str, tuple[bool, str | None, float]] = {}
        self.sims: dict[str, tuple[SimResult, float]] = {}
        self.proxies: dict[str, tuple[SimResult, float]] = {}
        self.proxy_calls = 0

    def _map(self, fn: Callable, jobs: list) -> list:
        if self.executor is None or len(jobs) < 2:
            return [fn(j) for j in jobs]
        chunk = max(1, len(jobs) // (4 * self.config.workers))
        return list(self.executor.map(fn, jobs, chunksize=chunk))

    def _fill(self, cache: dict, cands: list[Candidate], fn: Callable, extra: tuple) -> None:
        todo = sorted({c.key: c for c in cands if c.key not in cache}.values(), key=lambda c: c.key)
        jobs = [(c.dsl, self.config.branch, self.limits, *extra) for c in todo]
        for c, res in zip(todo, self._map(fn, jobs)):
            cache[c.key] = res

    def verify(self, cands: list[Candidate]) -> None:
        self._fill(self.reports, cands, _verify_task, ())
        for c in cands:
            c.report = self.reports[c.key]

    def validness(self, cands: list[Candidate]) -> None:
        self._fill(self.valid, cands, _validness_task, ())

    def simulate(self, cands: list[Candidate]) -> None:
        cfg = self.config
        self._fill(self.sims, cands, _simulate_task, (cfg.seed, cfg.sim_steps, cfg.data_seed))
        for c in cands:
            c.sim = self.sims[c.key][0]

    def proxy(self, cands: list[Candidate]) -> None:
        cfg = self.config
        before = len(self.proxies)
        self._fill(self.proxies, cands, _proxy_task,
                   (cfg.seed, cfg.proxy_steps, cfg.proxy_batch, cfg.data_seed))
        self.proxy_calls += len(self.proxies) - before
        for c in cands:
            c.fitness = self.proxies[c.key][0].metric


def _executor(workers: int) -> ProcessPoolExecutor | None:
    return ProcessPoolExecutor(max_workers=workers) if workers > 1 else None


# -- one generation -----------------------------------------------------------

def _distinct(population: Iterable[LossExpr | Candidate], gen: int) -> list[Candidate]:
    out: dict[str, Candidate] = {}
    for item in population:
        c = item if isinstance(item, Candidate) else Candidate(item, gen)
        out.setdefault(c.key, c)
    return list(out.values())


def _fitness_order(c: Candidate):
    return (-c.fitness, c.key)


def _relax(threshold: float, best_sim: float) -> float:
    if math.isfinite(threshold):
        return threshold * RELAX_FACTOR
    return best_sim * RELAX_FACTOR


def _generation(population, config: SearchConfig, threshold: float, stages: _Stages, gen: int,
                elites: Sequence[str], log: GenerationLog) -> tuple[list[Candidate], float]:
    """One funnel pass; records go straight into ``log`` so failures keep them."""
    if not population:
        raise ValueError("population is empty")
    cands = _distinct(population, gen)

    stages.verify(cands)
    for c in cands:
        r = c.report
        log.add(gen, c.dsl, "verify", r.failed_check(), r.overall, r.millis)
    passed = [c for c in cands if c.report.overall]
    n_valid = sum(c.report.validness for c in cands)

    stages.simulate(passed)
    for c in passed:
        res, ms = stages.sims[c.key]
        log.add(gen, c.dsl, "simulate", res.metric, not res.diverged, ms)
    simulated = [c for c in passed if not c.sim.diverged]
    best_sim = max((c.sim.metric for c in simulated), default=-math.inf)

    if not simulated:
        raise EmptyFunnel(f"generation {gen}: no candidate reached a finite simulation")
    survivors = [c for c in simulated if c.sim.metric >= threshold]
    while not survivors:
        threshold = _relax(threshold, best_sim)
        log.add(gen, None, "relax", threshold, True, 0.0)
        survivors = [c for c in simulated if c.sim.metric >= threshold]

    # surviving parents keep a slot; the rest compete on the simulation metric
    elite_set = set(elites)
    ranked = sorted((c for c in survivors if c.key in elite_set), key=lambda c: c.key)
    ranked += sorted((c for c in survivors if c.key not in elite_set),
                     key=lambda c: (-c.sim.metric, c.key))
    top_k = ranked[: config.K]

    stages.proxy(top_k)
    for c in top_k:
        res, ms = stages.proxies[c.key]
        log.add(gen, c.dsl, "proxy", c.fitness, not res.diverged, ms)

    parents = sorted(top_k, key=_fitness_order)[: config.P]
    log.parents.append([p.key for p in parents])
    new_threshold = parents[0].sim.metric
    log.summaries.append(GenerationSummary(
        gen=gen, n_seeded=len(population), n_valid=n_valid, n_property_pass=len(passed),
        n_simulated=len(survivors), n_proxy=len(top_k), best_sim=best_sim,
        best_fitness=parents[0].fitness, threshold=threshold))
    return parents, new_threshold


def run_generation(population: Sequence[LossExpr | Candidate], config: SearchConfig,
                   threshold: float = -math.inf, gen: int = 1, elites: Sequence[str] = ()
                   ) -> tuple[list[Candidate], GenerationLog, float]:
    """Run the funnel once; returns (parents, log, threshold for the next generation).

    ``n_simulated`` in the summary counts candidates that cleared the
    simulation threshold.
    """
    log = GenerationLog()
    with _pool(config) as executor:
        stages = _Stages(config, executor)
        parents, new_threshold = _generation(population, config, threshold, stages, gen, elites, log)
    log.proxy_calls = stages.proxy_calls
    return parents, log, new_threshold


class _pool:
    def __init__(self, config: SearchConfig):
        self.executor = _executor(config.workers)

    def __enter__(self):
        return self.executor

    def __exit__(self, *exc):
        if self.executor is not None:
            self.executor.shutdown()


# -- full searches ------------------------------------------------------------

def _better(a: Candidate | None, b: Candidate) -> bool:
    return a is None or b.fitness > a.fitness


def write_outputs(out_dir: str | Path, result: SearchResult, prefix: str = "") -> None:
    out = Path(out_dir)
    atomic_write_text(out / f"{prefix}log.jsonl", result.log.to_jsonl())
    atomic_write_text(out / f"{prefix}summary.csv", result.log.summary_csv())
    if result.best is not None:
        text = f"{result.best.dsl}\nfitness = {result.best.fitness!r}\n"
        atomic_write_text(out / f"{prefix}best.loss", text)


def _with_outputs(run: Callable[[GenerationLog], Candidate | None], out_dir, prefix: str
                  ) -> SearchResult:
    log = GenerationLog()
    best = None
    try:
        best = run(log)
    finally:
        if out_dir is not None:
            write_outputs(out_dir, SearchResult(best, log), prefix)
    return SearchResult(best, log)


def run_search(config: SearchConfig, out_dir: str | Path | None = None,
               population: Sequence[LossExpr] | None = None) -> SearchResult:
    """The full generational loop; ``population`` overrides the seeded first generation."""

    def run(log: GenerationLog) -> Candidate | None:
        rng = np.random.default_rng(config.seed)
        initial = config.initial
        if population is None:
            pop = [initial] + seed_population(initial, config.N - 1, rng, limits=config.limits)
        else:
            pop = list(population)
        threshold = -math.inf
        best = None
        elites: list[str] = []
        with _pool(config) as executor:
            stages = _Stages(config, executor)
            for gen in range(1, config.E + 1):
                try:
                    parents, threshold = _generation(pop, config, threshold, stages, gen, elites, log)
                finally:
                    log.proxy_calls = stages.proxy_calls
                for p in parents:
                    if _better(best, p):
                        best = p
                elites = [p.key for p in parents]
                if gen < config.E:
                    pop = breed([p.expr for p in parents], config.N, config, rng)
        return best

    return _with_outputs(run, out_dir, "")


def run_vanilla_ea(config: SearchConfig, out_dir: str | Path | None = None) -> SearchResult:
    """Same loop with only the validness check before proxy training."""

    def run(log: GenerationLog) -> Candidate | None:
        rng = np.random.default_rng(config.seed)
        initial = config.initial
        pop = [initial] + seed_population(initial, config.N - 1, rng, limits=config.limits)
        best = None
        with _pool(config) as executor:
            stages = _Stages(config, executor)
            for gen in range(1, config.E + 1):
                cands = _distinct(pop, gen)
                stages.validness(cands)
                valid = []
                for c in cands:
                    ok, probe, ms = stages.valid[c.key]
                    log.add(gen, c.dsl, "validness", probe, ok, ms)
                    if ok:
                        valid.append(c)
                try:
                    stages.proxy(valid)
                finally:
                    log.proxy_calls = stages.proxy_calls
                for c in valid:
                    res, ms = stages.proxies[c.key]
                    log.add(gen, c.dsl, "proxy", c.fitness, not res.diverged, ms)
                if not valid:
                    raise EmptyFunnel(f"generation {gen}: no valid candidate")
                parents = sorted(valid, key=_fitness_order)[: config.P]
                log.parents.append([p.key for p in parents])
                log.summaries.append(GenerationSummary(
                    gen=gen, n_seeded=len(pop), n_valid=len(valid), n_property_pass=len(valid),
                    n_simulated=len(valid), n_proxy=len(valid), best_sim=math.nan,
                    best_fitness=parents[0].fitness, threshold=math.nan))
                for p in parents:
                    if _better(best, p):
                        best = p
                if gen < config.E:
                    pop = breed([p.expr for p in parents], config.N, config, rng)
        return best

    return _with_outputs(run, out_dir, "vanilla_")


def run_random_search(config: SearchConfig, budget: int | None = None,
                      out_dir: str | Path | None = None) -> SearchResult:
    """Proxy-train random trees with no filtering, ``budget`` of them (default E*K).

    Each sample is still verified, for bookkeeping only.
    """
    budget = config.E * config.K if budget is None else budget

    def run(log: GenerationLog) -> Candidate | None:
        rng = np.random.default_rng(config.seed)
        cands = [Candidate(random_candidate(config.branch, rng, config.limits), 1)
                 for _ in range(budget)]
        best = None
        with _pool(config) as executor:
            stages = _Stages(config, executor)
            stages.verify(cands)
            try:
                stages.proxy(cands)
            finally:
                log.proxy_calls = stages.proxy_calls
        for c in cands:
            log.add(1, c.dsl, "verify", c.report.failed_check(), c.report.overall, c.report.millis)
            res, ms = stages.proxies[c.key]
            log.add(1, c.dsl, "proxy", c.fitness, not res.diverged, ms)
            if _better(best, c):
                best = c
        if cands:
            log.summaries.append(GenerationSummary(
                gen=1, n_seeded=budget, n_valid=sum(c.report.validness for c in cands),
                n_property_pass=sum(c.report.overall for c in cands), n_simulated=len(cands),
                n_proxy=len(cands), best_sim=math.nan, best_fitness=best.fitness,
                threshold=math.nan))
        return best

    return _with_outputs(run, out_dir, "random_")


def evaluations_to_first_pass(log: GenerationLog) -> int | None:
    """Proxy evaluations spent up to and including the first verifier-passing candidate."""
    verified = {r["expr"] for r in log.records if r["stage"] == "verify" and r["pass"]}
    for k, rec in enumerate((r for r in log.records if r["stage"] == "proxy"), start=1):
        if rec["expr"] in verified:
            return k
    return None


@dataclass
class BenchRow:
    algo: str
    evaluated_loss_count: int
    wall_seconds: float
    best_fitness: float

    FIELDS = ("algo", "evaluated_loss_count", "wall_seconds", "best_fitness")


def run_bench(config: SearchConfig, algos: Sequence[str] = ("cse", "vanilla", "random")
              ) -> list[BenchRow]:
    """Paired runs of each algorithm under one config; counts are proxy evaluations."""
    runners = {"cse": run_search, "vanilla": run_vanilla_ea, "random": run_random_search}
    rows = []
    for algo in algos:
        start = time.perf_counter()
        best, log = runners[algo](config)
        rows.append(BenchRow(algo, log.proxy_calls, time.perf_counter() - start,
                             best.fitness if best is not None else math.nan))
    return rows
