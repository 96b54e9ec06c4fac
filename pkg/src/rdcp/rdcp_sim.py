"""Monte Carlo simulation of the degree-constrained process on K_n.

Discrete mode adds one uniformly chosen allowed absent edge per step until
saturation; continuous mode attempts every edge of K_n once, in uniform
random order, at the order statistics of i.i.d. mean-n exponential clocks.
Both modes share the bookkeeping: adjacency in per-vertex small lists,
the unsaturated set as a swap-remove array, and components in a union-find
with online largest tracking.

Sampling in discrete mode draws a uniform ordered pair of distinct
unsaturated vertices and rejects when the edge already exists, which
realizes the uniform law on allowed absent edges exactly (rejection
probability is at most Delta/(U-1) for U unsaturated vertices). Once
U <= 2*Delta + 2 the remaining allowed pairs are enumerated outright, which
also detects termination: a maximal graph can retain unsaturated vertices
whose missing pairs are all present.

Replicates split deterministic Philox streams off the master seed
(SeedSequence([seed, rep])), so runs are reproducible and embarrassingly
parallel.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .distributions import DegreeDistribution
from .errors import OutOfRange, ThresholdNeverReached
from .lambda_solver import LambdaTable

_FLOAT_BLOCK = 1 << 16


class _Floats:
    """Buffered uniform(0,1) stream; one numpy call per block."""

    __slots__ = ("rng", "buf", "ptr")

    def __init__(self, rng):
        self.rng = rng
        self.buf = rng.random(_FLOAT_BLOCK)
        self.ptr = 0

    def next(self) -> float:
        if self.ptr == _FLOAT_BLOCK:
            self.buf = self.rng.random(_FLOAT_BLOCK)
            self.ptr = 0
        x = self.buf[self.ptr]
        self.ptr += 1
        return x


class UnionFind:
    """Array union-find with union by size and path halving."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.largest = 1 if n else 0

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        if self.size[ra] > self.largest:
            self.largest = self.size[ra]

    def component_sizes(self) -> list:
        sizes = {}
        for v in range(len(self.parent)):
            r = self.find(v)
            sizes[r] = sizes.get(r, 0) + 1
        return sorted(sizes.values(), reverse=True)

    def two_largest(self) -> tuple:
        sizes = self.component_sizes()
        first = sizes[0] if sizes else 0
        second = sizes[1] if len(sizes) > 1 else 0
        return first, second


@dataclass(frozen=True)
class SimConfig:
    """One replicate's configuration; checkpoints are edge densities
    l/n in discrete mode and clock times in continuous mode."""

    n: int
    dist: DegreeDistribution
    seed: int
    checkpoints: tuple = ()
    mode: str = "discrete"
    debug_checks: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need n >= 2 vertices, got {self.n}")
        if self.mode not in ("discrete", "continuous"):
            raise ValueError(f"mode must be discrete|continuous, got {self.mode!r}")
        if any(c < 0 for c in self.checkpoints):
            raise ValueError("checkpoints must be non-negative")
        if self.mode == "discrete":
            cap = 0.5 * self.dist.mean
            if any(c > cap + 1e-12 for c in self.checkpoints):
                raise ValueError(f"discrete checkpoints must lie in [0, {cap}]")


@dataclass(frozen=True)
class CheckpointRecord:
    checkpoint: float
    edges: int
    largest: int
    second: int
    degree_histogram: dict  # {constraint: {degree: count}}


@dataclass(frozen=True)
class SimTrace:
    """Seeded trajectory: checkpoint records plus the terminal summary."""

    config: SimConfig
    records: tuple
    final_edges: int
    unsaturated: int
    saturated_run: bool  # True when the final graph was reached

    def to_rows(self, rep: int = 0) -> list:
        rows = []
        for r in self.records:
            rows.append(
                {
                    "rep": rep,
                    "checkpoint": r.checkpoint,
                    "edges": r.edges,
                    "largest": r.largest,
                    "second": r.second,
                    "deg_hist_json": json.dumps(r.degree_histogram, sort_keys=True),
                }
            )
        return rows

    def to_dict(self, rep: int = 0) -> dict:
        return {
            "rep": rep,
            "n": self.config.n,
            "mode": self.config.mode,
            "seed": self.config.seed,
            "final_edges": self.final_edges,
            "unsaturated": self.unsaturated,
            "saturated_run": self.saturated_run,
            "records": self.to_rows(rep),
        }


def _rng_for(seed: int, rep: int = 0):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, rep])))


def _draw_constraints(dist: DegreeDistribution, n: int, rng) -> np.ndarray:
    cum = np.cumsum(dist.as_array())
    idx = np.searchsorted(cum, rng.random(n), side="right")
    return np.minimum(idx, dist.delta - 2).astype(np.int64) + 2


def _histogram(constraint, degree, delta: int) -> dict:
    hist: dict = {}
    for k, j in zip(constraint, degree):
        row = hist.setdefault(str(int(k)), {})
        key = str(int(j))
        row[key] = row.get(key, 0) + 1
    return hist


class _Engine:
    """Shared mutable state for one simulation run."""

    def __init__(self, cfg: SimConfig, rng):
        n = cfg.n
        self.cfg = cfg
        self.constraint = _draw_constraints(cfg.dist, n, rng)
        self.degree = [0] * n
        self.adj = [[] for _ in range(n)]
        self.unsat = list(range(n))
        self.pos = list(range(n))
        self.uf = UnionFind(n)
        self.edges = 0
        self.floats = _Floats(rng)
        self.constraint_list = self.constraint.tolist()

    @property
    def n_unsat(self) -> int:
        return len(self.unsat)

    def _remove_unsat(self, v: int) -> None:
        unsat, pos = self.unsat, self.pos
        i = pos[v]
        last = unsat[-1]
        unsat[i] = last
        pos[last] = i
        unsat.pop()
        pos[v] = -1

    def add_edge(self, a: int, b: int) -> None:
        if self.cfg.debug_checks:
            assert self.degree[a] < self.constraint_list[a]
            assert self.degree[b] < self.constraint_list[b]
            assert b not in self.adj[a]
        self.adj[a].append(b)
        self.adj[b].append(a)
        self.degree[a] += 1
        self.degree[b] += 1
        if self.degree[a] == self.constraint_list[a]:
            self._remove_unsat(a)
        if self.degree[b] == self.constraint_list[b]:
            self._remove_unsat(b)
        self.uf.union(a, b)
        self.edges += 1

    def allowed_absent_pairs(self) -> list:
        """Explicit endgame enumeration over the unsaturated set."""
        pairs = []
        unsat = self.unsat
        for i in range(len(unsat)):
            a = unsat[i]
            adj_a = self.adj[a]
            for j in range(i + 1, len(unsat)):
                b = unsat[j]
                if b not in adj_a:
                    pairs.append((a, b))
        return pairs

    def sample_allowed_edge(self):
        """Uniform allowed absent edge, or None at the final graph."""
        unsat, adj, nxt = self.unsat, self.adj, self.floats.next
        cutoff = 2 * self.cfg.dist.delta + 2
        while True:
            u_count = len(unsat)
            if u_count <= cutoff:
                pairs = self.allowed_absent_pairs()
                if not pairs:
                    return None
                return pairs[int(nxt() * len(pairs))]
            i = int(nxt() * u_count)
            j = int(nxt() * (u_count - 1))
            if j >= i:
                j += 1
            a, b = unsat[i], unsat[j]
            if b not in adj[a]:
                return a, b

    def checkpoint_record(self, label: float) -> CheckpointRecord:
        first, second = self.uf.two_largest()
        if self.cfg.debug_checks:
            self._debug_verify()
        return CheckpointRecord(
            checkpoint=label,
            edges=self.edges,
            largest=first,
            second=second,
            degree_histogram=_histogram(self.constraint_list, self.degree, self.cfg.dist.delta),
        )

    def _debug_verify(self) -> None:
        for v, d in enumerate(self.degree):
            assert d <= self.constraint_list[v], "degree constraint violated"
            assert d == len(self.adj[v])
        assert sorted(self._bfs_sizes(), reverse=True) == self.uf.component_sizes()

    def _bfs_sizes(self) -> list:
        n = self.cfg.n
        seen = [False] * n
        sizes = []
        for root in range(n):
            if seen[root]:
                continue
            stack = [root]
            seen[root] = True
            count = 0
            while stack:
                v = stack.pop()
                count += 1
                for w in self.adj[v]:
                    if not seen[w]:
                        seen[w] = True
                        stack.append(w)
            sizes.append(count)
        return sizes


def simulate_discrete(cfg: SimConfig) -> SimTrace:
    """Run to the final graph, recording at edge counts floor(n * s)."""
    if cfg.mode != "discrete":
        raise ValueError("config mode is not 'discrete'")
    rng = _rng_for(cfg.seed)
    eng = _Engine(cfg, rng)
    pending = sorted(cfg.checkpoints)
    records = []
    for s in [c for c in pending if math.floor(cfg.n * c) <= 0]:
        records.append(eng.checkpoint_record(s))
    pending = [c for c in pending if math.floor(cfg.n * c) > 0]

    while True:
        pick = eng.sample_allowed_edge()
        if pick is None:
            break
        eng.add_edge(*pick)
        while pending and eng.edges == math.floor(cfg.n * pending[0]):
            records.append(eng.checkpoint_record(pending[0]))
            pending.pop(0)
    for s in pending:  # saturation reached below floor(n*s): graph is final
        records.append(eng.checkpoint_record(s))
    return SimTrace(
        config=cfg,
        records=tuple(records),
        final_edges=eng.edges,
        unsaturated=eng.n_unsat,
        saturated_run=True,
    )


def simulate_continuous(cfg: SimConfig, edge_checkpoints: tuple = ()) -> SimTrace:
    """Attempt edges in uniform random order at exponential order-statistic
    times; an attempt succeeds iff both endpoints are unsaturated.

    The i-th inter-attempt gap is exponential with rate (E_total - i + 1)/n,
    E_total = n(n-1)/2, so attempts by time t number about n*t/2. Runs until
    the last checkpoint (or the final graph, if sooner). `edge_checkpoints`
    additionally records the state at given accepted-edge densities l/n,
    which is how the successful-edge subsequence is compared in law against
    a discrete-mode run.
    """
    if cfg.mode != "continuous":
        raise ValueError("config mode is not 'continuous'")
    if not cfg.checkpoints:
        raise ValueError("continuous mode needs at least one checkpoint")
    rng = _rng_for(cfg.seed)
    eng = _Engine(cfg, rng)
    n = cfg.n
    e_total = n * (n - 1) // 2
    pending = sorted(cfg.checkpoints)
    pending_edges = sorted(math.floor(n * s) for s in edge_checkpoints)
    records = []

    attempted = set()
    clock = 0.0
    attempts = 0
    exp_buf = rng.standard_exponential(_FLOAT_BLOCK)
    exp_ptr = 0
    nxt = eng.floats.next
    saturated = False

    while pending:
        if attempts >= e_total or saturated or eng.n_unsat <= 1:
            # nothing more can ever be added
            for s in pending:
                records.append(eng.checkpoint_record(s))
            pending = []
            break
        if exp_ptr == _FLOAT_BLOCK:
            exp_buf = rng.standard_exponential(_FLOAT_BLOCK)
            exp_ptr = 0
        gap = exp_buf[exp_ptr] * (n / (e_total - attempts))
        exp_ptr += 1
        t_next = clock + gap
        while pending and t_next > pending[0]:
            records.append(eng.checkpoint_record(pending[0]))
            pending.pop(0)
        if not pending:
            break
        clock = t_next
        attempts += 1
        while True:
            a = int(nxt() * n)
            b = int(nxt() * (n - 1))
            if b >= a:
                b += 1
            key = (a * n + b) if a < b else (b * n + a)
            if key not in attempted:
                break
        attempted.add(key)
        if eng.degree[a] < eng.constraint_list[a] and eng.degree[b] < eng.constraint_list[b]:
            eng.add_edge(a, b)
            while pending_edges and eng.edges == pending_edges[0]:
                records.append(eng.checkpoint_record(eng.edges / n))
                pending_edges.pop(0)
            if eng.n_unsat <= 2 * cfg.dist.delta + 2 and not eng.allowed_absent_pairs():
                saturated = True
    return SimTrace(
        config=cfg,
        records=tuple(records),
        final_edges=eng.edges,
        unsaturated=eng.n_unsat,
        saturated_run=saturated,
    )


def simulate(cfg: SimConfig) -> SimTrace:
    return simulate_discrete(cfg) if cfg.mode == "discrete" else simulate_continuous(cfg)


def replicate_traces(cfg: SimConfig, reps: int, max_workers: int | None = None) -> list:
    """Independent replicates with per-rep Philox substreams.

    Parallelism is capped by RDCP_THREADS (default: sequential); traces are
    identical either way because every rep owns its stream.
    """
    if max_workers is None:
        max_workers = int(os.environ.get("RDCP_THREADS", "1"))
    cfgs = [
        SimConfig(cfg.n, cfg.dist, _mix_seed(cfg.seed, rep), cfg.checkpoints, cfg.mode, cfg.debug_checks)
        for rep in range(reps)
    ]
    if max_workers <= 1 or reps == 1:
        return [simulate(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=min(max_workers, reps)) as pool:
        return list(pool.map(simulate, cfgs))


def _mix_seed(seed: int, rep: int) -> int:
    # distinct, stable per-rep seeds; the Philox stream also keys on rep=0
    return (seed * 0x9E3779B97F4A7C15 + rep) % (1 << 63)


# ---------------------------------------------------------------------------
# mean-field predictions for trace comparison
# ---------------------------------------------------------------------------


def degree_profile_expected(
    dist: DegreeDistribution, table: LambdaTable, t_hat: float
) -> np.ndarray:
    """Expected fraction z_k of vertices one edge below constraint k+1:
    z_k = e^{-lambda} lambda^k / k! * p_{k+1}, k = 0..delta-1."""
    if t_hat > table.t_max * (1.0 + 1e-12):
        raise OutOfRange(f"t_hat = {t_hat} beyond table horizon {table.t_max}")
    lam = table.lambda_at(float(t_hat))
    out = np.empty(dist.delta)
    term = math.exp(-lam)
    for k in range(dist.delta):
        if k > 0:
            term *= lam / k
        out[k] = term * dist.p(k + 1)
    return out


def degree_matrix_expected(
    dist: DegreeDistribution, table: LambdaTable, t_hat: float
) -> dict:
    """Expected joint law {constraint d: [P(degree = j) for j = 0..d]}.

    A vertex's degree at clock time t is min(N, d) where N counts an
    inhomogeneous Poisson process with mean lambda(t): Poisson probabilities
    below d, the complement at j = d.
    """
    if t_hat > table.t_max * (1.0 + 1e-12):
        raise OutOfRange(f"t_hat = {t_hat} beyond table horizon {table.t_max}")
    lam = table.lambda_at(float(t_hat))
    out = {}
    for d in range(2, dist.delta + 1):
        pd = dist.p(d)
        if pd == 0.0:
            continue
        probs = np.empty(d + 1)
        term = math.exp(-lam)
        acc = 0.0
        for j in range(d):
            if j > 0:
                term *= lam / j
            probs[j] = term
            acc += term
        probs[d] = max(0.0, 1.0 - acc)
        out[d] = probs
    return out


@dataclass(frozen=True)
class CrossingEstimate:
    """Empirical threshold-crossing summary (upper-biased at finite n)."""

    median: float
    low: float
    high: float
    values: tuple
    n_crossed: int
    reps: int

    def to_dict(self) -> dict:
        return {
            "median": self.median,
            "low": self.low,
            "high": self.high,
            "values": list(self.values),
            "n_crossed": self.n_crossed,
            "reps": self.reps,
        }


def empirical_critical_time(
    dist: DegreeDistribution,
    n: int,
    reps: int,
    threshold_frac: float,
    seed: int = 0,
) -> CrossingEstimate:
    """Per replicate, the smallest edge density l/n at which the largest
    component reaches threshold_frac * n; median and spread across reps.

    This finite-n estimator is biased upward: the giant needs time to grow
    to the threshold after the true transition. Raises ThresholdNeverReached
    when no replicate crosses before its final graph.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if not 0.0 < threshold_frac < 0.2:
        raise ValueError("threshold_frac must lie in (0, 0.2)")
    target = threshold_frac * n
    crossings = []
    for rep in range(reps):
        rng = _rng_for(seed, rep)
        cfg = SimConfig(n=n, dist=dist, seed=seed, mode="discrete")
        eng = _Engine(cfg, rng)
        crossed = None
        while True:
            pick = eng.sample_allowed_edge()
            if pick is None:
                break
            eng.add_edge(*pick)
            if eng.uf.largest >= target:
                crossed = eng.edges / n
                break
        crossings.append(crossed)
    observed = [c for c in crossings if c is not None]
    if not observed:
        raise ThresholdNeverReached(
            f"no replicate reached a {threshold_frac:.0%} component "
            f"(n={n}, reps={reps})"
        )
    values = sorted(observed)
    return CrossingEstimate(
        median=float(np.median(values)),
        low=values[0],
        high=values[-1],
        values=tuple(values),
        n_crossed=len(values),
        reps=reps,
    )
