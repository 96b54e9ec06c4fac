"""Principal-eigenvalue solver for the saturation-time integral operator.

The operator acts on functions of the saturation clock as

    (T_{p,t_hat} v)(t) = int_0^inf H_p(s) v(s) min(t_hat, t, s) ds,

is self-adjoint in the H_p-weighted inner product, and its principal
eigenvalue mu(t_hat) increases continuously through 1 exactly at the
continuous-time critical point. This module discretizes T by a Nyström rule
(composite Gauss-Legendre panels, geometric in t, symmetrized by sqrt-weight
conjugation), extracts the principal pair by power iteration, and locates
the root mu(t_hat) = 1 by bisection with geometric bracket growth.

Key discretization fact: every eigenfunction of T_{p,t_hat} is constant for
t >= t_hat (the kernel no longer depends on t there), so for finite t_hat
the integral over (t_hat, inf) collapses exactly onto one extra node of mass
I_p(t_hat). With that closure node the finite matrix has no domain
truncation error at all; accuracy is governed by panel quadrature alone.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .distributions import DegreeDistribution, asymptotic_tc_hat
from .errors import (
    BracketFailure,
    DegenerateRegular,
    HorizonTooSmall,
    NoConvergence,
    SingularAtZero,
)
from .lambda_solver import HazardModel
from .quadrature import geometric_edges, panel_nodes

#: Default number of quadrature nodes of a discretization.
DEFAULT_NODES = 400

#: Gauss-Legendre order per panel. Low order + many panels wins here: the
#: kernel kink along the diagonal caps convergence at O(h^2) in the panel
#: width regardless of order, so panels should be as narrow as possible.
PANEL_ORDER = 2

#: Smallest panel edge relative to t_max.
REL_START = 1e-3

#: Geometric-expansion cap for the critical-time bracket.
BRACKET_CAP = 1e6

#: Power-iteration stopping tolerance (relative residual).
POWER_TOL = 1e-12

POWER_MAX_ITER = 20_000


@dataclass(frozen=True)
class OperatorDiscretization:
    """Finite symmetric eigenproblem approximating T_{p, t_hat}.

    `weights` are H_p(s_i) times the panel quadrature weight; when
    `tail_closed`, the last node sits at t_max and carries the exact tail
    mass I_p(t_max). The symmetrized matrix sqrt(w_i) K(s_i, s_j) sqrt(w_j)
    is exactly symmetric by construction.
    """

    hazard: HazardModel
    t_hat: float
    nodes: np.ndarray
    weights: np.ndarray
    t_max: float
    tail_closed: bool
    matrix: np.ndarray = field(repr=False)
    truncation_note: float = 0.0  # estimate for the open-horizon case

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def _panel_edges(t_max: float, n_nodes: int, order: int, interior: tuple = ()) -> np.ndarray:
    n_panels = max(2, n_nodes // order)
    edges = geometric_edges(t_max * REL_START, t_max, n_panels - 1, include_zero=True)
    for point in interior:
        if 0.0 < point < t_max:
            edges = np.union1d(edges, [point])
    return edges


def discretize(
    hazard: HazardModel,
    t_hat: float,
    n_nodes: int = DEFAULT_NODES,
    t_max: float | None = None,
    tail_closure: bool = True,
    order: int = PANEL_ORDER,
) -> OperatorDiscretization:
    """Nyström discretization of T_{p, t_hat} in the H_p-weighted product.

    Finite t_hat defaults the domain to [0, t_hat] plus the exact tail node;
    t_hat = inf (the open-horizon sentinel) truncates at `t_max` (default:
    the table horizon) and annotates the result with the tail estimate
    I_p(t_max) * t_max. Panels are geometric in t and always aligned with
    t_hat so the kernel kink never falls inside a panel.
    """
    if n_nodes < 16:
        raise ValueError(f"n_nodes must be >= 16, got {n_nodes}")
    if t_hat < 0.0:
        raise ValueError(f"t_hat must be >= 0, got {t_hat}")
    open_horizon = math.isinf(t_hat)
    horizon = hazard.t_max
    if open_horizon:
        t_max = horizon if t_max is None else float(t_max)
    else:
        t_max = float(t_hat) if t_max is None else float(t_max)
        if t_hat > horizon * (1.0 + 1e-12):
            raise HorizonTooSmall(
                f"t_hat = {t_hat} exceeds the table horizon {horizon}"
            )
        if t_hat > t_max:
            raise HorizonTooSmall(f"t_hat = {t_hat} exceeds t_max = {t_max}")
    if t_max > horizon * (1.0 + 1e-12):
        raise HorizonTooSmall(f"t_max = {t_max} exceeds the table horizon {horizon}")

    # degenerate parameter: the kernel vanishes identically
    scale = t_max if t_max > 0.0 else 1.0
    interior = () if open_horizon else (t_hat,)
    edges = _panel_edges(scale, n_nodes, order, interior=interior)
    nodes_2d, pw_2d = panel_nodes(edges, order)
    nodes = nodes_2d.ravel()
    weights = pw_2d.ravel() * hazard.hazard_density(nodes)

    tail_closed = bool(tail_closure) and not open_horizon
    note = 0.0
    if tail_closed:
        nodes = np.append(nodes, t_max)
        weights = np.append(weights, hazard.survival(t_max))
    else:
        note = float(hazard.survival(t_max) * t_max)

    kernel = np.minimum(np.minimum.outer(nodes, nodes), t_hat)
    sw = np.sqrt(weights)
    matrix = np.outer(sw, sw) * kernel

    return OperatorDiscretization(
        hazard=hazard,
        t_hat=float(t_hat),
        nodes=nodes,
        weights=weights,
        t_max=float(t_max),
        tail_closed=tail_closed,
        matrix=matrix,
        truncation_note=note,
    )


def principal_eigenvalue(
    op: OperatorDiscretization, tol: float = POWER_TOL
) -> tuple[float, np.ndarray]:
    """Largest eigenvalue and eigenvector of the symmetrized matrix.

    Power iteration from the all-ones start (valid: the matrix is entrywise
    nonnegative and the principal eigenvalue is simple); falls back to a
    full symmetric eigensolve if the iteration stalls. The returned vector
    has unit 2-norm and strictly positive entries.
    """
    m = op.matrix
    if float(np.max(np.abs(m))) == 0.0:
        v = np.full(m.shape[0], 1.0 / math.sqrt(m.shape[0]))
        return 0.0, v
    v = np.full(m.shape[0], 1.0 / math.sqrt(m.shape[0]))
    mu = 0.0
    converged = False
    for _ in range(POWER_MAX_ITER):
        w = m @ v
        mu = float(v @ w)
        resid = float(np.linalg.norm(w - mu * v))
        v = w / np.linalg.norm(w)
        if resid <= tol * mu:
            converged = True
            break
    if not converged:
        # near-degenerate spectrum: use the dense symmetric solver
        vals, vecs = np.linalg.eigh(m)
        mu = float(vals[-1])
        v = vecs[:, -1]
        if float(np.sum(v)) < 0.0:
            v = -v
        resid = float(np.linalg.norm(m @ v - mu * v))
        if resid > 1e-8 * max(mu, 1.0):
            raise NoConvergence(
                f"eigensolve residual {resid:.3e} too large for mu = {mu:.6e}"
            )
    if np.any(v <= 0.0):
        if np.all(v[v <= 0.0] > -1e-13 * float(np.max(np.abs(v)))):
            v = np.maximum(v, np.min(v[v > 0.0]) * 1e-6)
            v = v / np.linalg.norm(v)
        else:
            raise NoConvergence("principal eigenvector is not strictly positive")
    return mu, v


@dataclass(frozen=True)
class CriticalTimeResult:
    """Output of the critical-time solve, JSON-serializable."""

    dist: DegreeDistribution
    t_hat_c: float
    t_c: float
    eigenvalue_trace: tuple  # ((t_hat, mu), ...) sorted by t_hat
    eigenfunction: tuple
    eigenfunction_nodes: tuple
    n_nodes: int
    t_max: float
    residual: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "p": {"delta": self.dist.delta, "probs": list(self.dist.probs)},
            "t_hat_c": self.t_hat_c,
            "t_c": self.t_c,
            "trace": [[t, mu] for t, mu in self.eigenvalue_trace],
            "n_nodes": self.n_nodes,
            "t_max": self.t_max,
            "residual": self.residual,
            "degenerate": self.degenerate,
        }

    def to_json(self) -> str:
        out = self.to_dict()
        if math.isinf(self.t_hat_c):
            out["t_hat_c"] = "inf"
        return json.dumps(out)


def _assert_trace_monotone(trace) -> None:
    trace = sorted(trace)
    for (t0, m0), (t1, m1) in zip(trace, trace[1:]):
        if t1 > t0 * (1.0 + 1e-9):
            if not m1 > m0:
                raise AssertionError(
                    f"eigenvalue trace not strictly increasing: mu({t0})={m0!r} "
                    f"vs mu({t1})={m1!r}"
                )
        elif m1 < m0 - 1e-12:
            raise AssertionError("eigenvalue trace decreased at nearly equal t_hat")


def critical_time_hat(
    dist: DegreeDistribution,
    tol: float = 1e-10,
    n_nodes: int = DEFAULT_NODES,
    table_tol: float = 1e-10,
    bracket_cap: float = BRACKET_CAP,
) -> CriticalTimeResult:
    """Locate the continuous-time critical point as the root of mu(t_hat)=1.

    Bisection with geometric bracket expansion starting from a quarter of
    the first-order prediction 1 / sum k(k-2) p_k; `tol` is relative on
    t_hat_c. Raises DegenerateRegular for the 2-regular law and
    BracketFailure if mu never exceeds 1 below `bracket_cap`.
    """
    if dist.is_two_regular:
        raise DegenerateRegular("mu(t_hat) < 1 for every finite t_hat at chi_2")

    state = {"hazard": None}

    def hazard_for(t_need: float) -> HazardModel:
        h = state["hazard"]
        if h is None or h.t_max < t_need:
            state["hazard"] = HazardModel.build(
                dist, max(t_need * 2.0, 1.0), tol=table_tol
            )
        return state["hazard"]

    cache: dict[float, float] = {}

    def mu_at(t_hat: float) -> float:
        if t_hat not in cache:
            h = hazard_for(t_hat)
            op = discretize(h, t_hat, n_nodes=n_nodes)
            cache[t_hat], _ = principal_eigenvalue(op)
        return cache[t_hat]

    lo = asymptotic_tc_hat(dist) / 4.0
    while mu_at(lo) >= 1.0:
        lo /= 4.0
        if lo < 1e-12:
            raise BracketFailure("mu >= 1 down to t_hat = 1e-12")
    hi = lo * 4.0
    while mu_at(hi) <= 1.0:
        lo = hi
        hi *= 4.0
        if hi > bracket_cap:
            raise BracketFailure(
                f"mu(t_hat) never exceeded 1 up to the cap {bracket_cap:g} "
                f"(last mu = {mu_at(lo):.6f} at t_hat = {lo:g})"
            )
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if mu_at(mid) < 1.0:
            lo = mid
        else:
            hi = mid

    t_hat_c = min(cache, key=lambda t: abs(cache[t] - 1.0))
    hazard = hazard_for(t_hat_c)
    op = discretize(hazard, t_hat_c, n_nodes=n_nodes)
    mu, vec = principal_eigenvalue(op)
    residual = float(np.linalg.norm(op.matrix @ vec - mu * vec))
    phi = vec / np.sqrt(op.weights)
    phi = phi / math.sqrt(float(np.sum(op.weights * phi * phi)))

    trace = tuple(sorted(cache.items()))
    _assert_trace_monotone(trace)
    t_c = 0.5 * hazard.mean_root_degree(t_hat_c)
    return CriticalTimeResult(
        dist=dist,
        t_hat_c=float(t_hat_c),
        t_c=float(t_c),
        eigenvalue_trace=trace,
        eigenfunction=tuple(float(x) for x in phi),
        eigenfunction_nodes=tuple(float(x) for x in op.nodes),
        n_nodes=n_nodes,
        t_max=float(hazard.t_max),
        residual=residual,
    )


def critical_time_discrete(
    dist: DegreeDistribution,
    tol: float = 1e-10,
    n_nodes: int = DEFAULT_NODES,
) -> CriticalTimeResult:
    """Discrete-time critical edge density t_c = F_p(t_hat_c) / 2.

    The 2-regular law is a special case: t_hat_c = inf, t_c = 1 exactly,
    flagged degenerate instead of raising.
    """
    if dist.is_two_regular:
        return CriticalTimeResult(
            dist=dist,
            t_hat_c=math.inf,
            t_c=1.0,
            eigenvalue_trace=(),
            eigenfunction=(),
            eigenfunction_nodes=(),
            n_nodes=0,
            t_max=math.inf,
            residual=0.0,
            degenerate=True,
        )
    return critical_time_hat(dist, tol=tol, n_nodes=n_nodes)


@dataclass(frozen=True)
class BranchingSimilarityReport:
    """Comparison of the raw branching operator with its symmetrized form."""

    mu_transformed: float
    mu_branching: float
    rel_gap: float
    hazard_identity_gap: float  # max rel gap of H = E * f / lambda on nodes
    rho_min: float              # min of the branching weight on the nodes

    def to_dict(self) -> dict:
        return {
            "mu_transformed": self.mu_transformed,
            "mu_branching": self.mu_branching,
            "rel_gap": self.rel_gap,
            "hazard_identity_gap": self.hazard_identity_gap,
            "rho_min": self.rho_min,
        }


def _perron_root(matrix: np.ndarray) -> float:
    n = matrix.shape[0]
    v = np.full(n, 1.0 / math.sqrt(n))
    mu = 0.0
    for _ in range(POWER_MAX_ITER):
        w = matrix @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        mu_new = float(v @ w) / float(v @ v)
        v = w / norm
        if abs(mu_new - mu) <= 1e-14 * max(1.0, abs(mu_new)):
            return mu_new
        mu = mu_new
    return mu


def branching_kernel_check(
    hazard: HazardModel,
    t_hat: float,
    n_nodes: int = DEFAULT_NODES,
    t_max: float | None = None,
) -> BranchingSimilarityReport:
    """Verify that the raw branching operator shares the leading eigenvalue
    of its symmetrized transform (they are conjugate by the multiplication
    operator E/lambda), and that H = E * f / lambda on the node grid.

    Both operators are discretized on the same plainly truncated node set;
    the t = 0 node is excluded since E/lambda is 0/0 there.
    """
    if math.isinf(t_hat):
        raise ValueError("branching comparison requires a finite t_hat")
    t_max = hazard.t_max if t_max is None else float(t_max)
    op = discretize(hazard, t_hat, n_nodes=n_nodes, t_max=t_max, tail_closure=False)
    nodes, pw = op.nodes, op.weights  # weights = H * panel weight
    if np.any(nodes <= 0.0):
        raise SingularAtZero("node at t = 0 where E/lambda is indeterminate")

    h_vals = hazard.hazard_density(nodes)
    lam = hazard.table.lambda_at(nodes)
    f_vals = hazard.branching_density(nodes)
    e_vals = hazard.branching_mean_degree(nodes)
    rho = hazard.branching_weight(nodes)

    identity_gap = float(np.max(np.abs(e_vals * f_vals / lam - h_vals) / np.maximum(h_vals, 1e-300)))

    kernel = np.minimum(np.minimum.outer(nodes, nodes), t_hat)
    panel_w = pw / h_vals
    t_matrix = kernel * (panel_w * h_vals)[None, :]
    b_matrix = (e_vals / lam)[:, None] * kernel * (panel_w * f_vals)[None, :]

    mu_t = _perron_root(t_matrix)
    mu_b = _perron_root(b_matrix)
    rel_gap = abs(mu_t - mu_b) / max(abs(mu_t), 1e-300)
    return BranchingSimilarityReport(
        mu_transformed=mu_t,
        mu_branching=mu_b,
        rel_gap=rel_gap,
        hazard_identity_gap=identity_gap,
        rho_min=float(np.min(rho)),
    )


@dataclass(frozen=True)
class EigenfunctionReport:
    """Gap between the Nyström eigenvector and the shooting-ODE solution."""

    max_gap: float
    mu: float
    n_nodes: int

    def to_dict(self) -> dict:
        return {"max_gap": self.max_gap, "mu": self.mu, "n_nodes": self.n_nodes}


def principal_eigenfunction_ode(
    hazard: HazardModel, t_hat_c: float, t_eval: np.ndarray
) -> np.ndarray:
    """Solve w'' = -H_p w, w(0)=0, w'(0)=1 on [0, t_hat_c], constant after.

    At the critical point this initial value problem reproduces the
    principal eigenfunction (unnormalized).
    """
    t_eval = np.asarray(t_eval, dtype=float)
    t_inside = np.clip(t_eval, 0.0, t_hat_c)

    def rhs(t, y):
        return [y[1], -hazard.hazard_density(t) * y[0]]

    sol = solve_ivp(
        rhs,
        (0.0, t_hat_c),
        [0.0, 1.0],
        method="RK45",
        rtol=1e-11,
        atol=1e-13,
        dense_output=True,
    )
    if not sol.success:
        raise NoConvergence(f"eigenfunction ODE solve failed: {sol.message}")
    return sol.sol(t_inside)[0]


def eigenfunction_ode_check(
    result: CriticalTimeResult,
    hazard: HazardModel,
    n_nodes: int | None = None,
) -> EigenfunctionReport:
    """Report the max pointwise gap between the L2(H_p)-normalized ODE
    solution and the Nyström eigenvector at the critical point."""
    n = 2 * result.n_nodes if n_nodes is None else n_nodes
    op = discretize(hazard, result.t_hat_c, n_nodes=n)
    mu, vec = principal_eigenvalue(op)
    phi = vec / np.sqrt(op.weights)
    phi /= math.sqrt(float(np.sum(op.weights * phi * phi)))

    w = principal_eigenfunction_ode(hazard, result.t_hat_c, op.nodes)
    w_norm = math.sqrt(float(np.sum(op.weights * w * w)))
    w = w / w_norm
    gap = float(np.max(np.abs(w - phi)))
    return EigenfunctionReport(max_gap=gap, mu=mu, n_nodes=n)


def two_regular_eigenfunction_gap(hazard: HazardModel, t_grid) -> float:
    """Max gap between the eigenfunction IVP solution and lambda(t) for the
    2-regular law on a truncated domain (they coincide analytically)."""
    t_grid = np.asarray(t_grid, dtype=float)
    w = principal_eigenfunction_ode(hazard, float(np.max(t_grid)), t_grid)
    lam = hazard.table.lambda_at(t_grid)
    return float(np.max(np.abs(w - lam)))
