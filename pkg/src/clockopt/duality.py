"""Exact primal/dual utility maximization on finite scenario trees.

On a finite filtered tree every finitely additive measure is countably
additive, so the dual domain collapses to the solid convex hull of scaled
martingale-measure densities: Y = F * (sum_v w_v Y^v) with F in [0, 1]
node-wise and sum w_v = y.  Singular parts are identically zero and are
documented, not simulated.

The primal is solved in Lagrangian-dual form: for multipliers lambda >= 0 on
the vertex budget constraints, the inner maximizer is the inverse-marginal
map c = I(t, sum_v lambda_v Y^v) node-wise, and the outer minimization of the
smooth convex dual function runs under a projected quasi-Newton method with a
certified duality gap.  The dual problem eliminates the solid factor F in
closed form per node (F = 1 wherever the endowment density vanishes) and
minimizes the reduced convex objective over the mixture simplex.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import (
    ArbitrageError,
    DomainError,
    InfeasibleError,
    NumericError,
    UnboundedError,
)
from .utility import (
    UtilityField,
    conjugate_v,
    inverse_marginal,
    marginal_utility,
    u_eval,
)

__all__ = [
    "ScenarioTree",
    "ClockWeights",
    "EndowmentDensity",
    "MartingaleVertex",
    "MartingalePolytope",
    "PrimalSolution",
    "DualSolution",
    "binomial_tree",
    "trinomial_tree",
    "make_clock",
    "build_density_process",
    "martingale_vertices",
    "hedging_prices",
    "is_financeable",
    "pairing",
    "endowment_pairings",
    "solve_primal",
    "solve_dual",
    "conjugacy_check",
    "recover_primal_from_dual",
    "boundary_behavior_check",
    "brute_force_oracle",
]


# ---------------------------------------------------------------------------
# tree structure


class ScenarioTree:
    """Finite filtered market: nodes with parent, branch probability, prices.

    All leaves sit at the same terminal time; node times are integer periods
    0..depth.  Branch probabilities are strictly positive and sum to one per
    parent; the root carries probability 1.
    """

    def __init__(self, parent, branch_prob, prices):
        self.parent = np.asarray(parent, dtype=int)
        self.branch_prob = np.asarray(branch_prob, dtype=float)
        prices = np.asarray(prices, dtype=float)
        if prices.ndim == 1:
            prices = prices[:, None]
        self.prices = prices
        n = len(self.parent)
        if not (len(self.branch_prob) == len(self.prices) == n):
            raise DomainError("parent, branch_prob and prices must align")
        roots = np.nonzero(self.parent < 0)[0]
        if len(roots) != 1 or roots[0] != 0:
            raise DomainError("exactly one root expected at index 0")
        self.children: list[list[int]] = [[] for _ in range(n)]
        for i in range(1, n):
            if self.parent[i] >= i:
                raise DomainError("nodes must be listed parents-first")
            self.children[self.parent[i]].append(i)
        self.time = np.zeros(n, dtype=int)
        for i in range(1, n):
            self.time[i] = self.time[self.parent[i]] + 1
        self.depth = int(self.time.max())
        self.leaves = np.array(
            [i for i in range(n) if not self.children[i]], dtype=int
        )
        if np.any(self.time[self.leaves] != self.depth):
            raise DomainError("all leaves must sit at the terminal time")
        if self.branch_prob[0] != 1.0:
            raise DomainError("root probability must be 1")
        if np.any(self.branch_prob <= 0.0):
            raise DomainError("branch probabilities must be strictly positive")
        for i in range(n):
            if self.children[i]:
                s = sum(self.branch_prob[c] for c in self.children[i])
                if abs(s - 1.0) > 1e-12:
                    raise DomainError(
                        f"branch probabilities at node {i} sum to {s}, expected 1"
                    )
        if np.any(self.prices <= 0.0):
            raise DomainError("prices must be strictly positive")
        self.path_prob = np.ones(n)
        for i in range(1, n):
            self.path_prob[i] = self.path_prob[self.parent[i]] * self.branch_prob[i]

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @property
    def n_assets(self) -> int:
        return self.prices.shape[1]

    def path_to(self, node: int) -> list[int]:
        """Node ids from the root to `node`, inclusive."""
        out = [node]
        while self.parent[out[-1]] >= 0:
            out.append(int(self.parent[out[-1]]))
        return out[::-1]

    def ancestor_at(self, leaf: int, t: int) -> int:
        node = int(leaf)
        while self.time[node] > t:
            node = int(self.parent[node])
        return node

    @classmethod
    def from_nodes(cls, nodes: list[dict]) -> "ScenarioTree":
        """Build from dicts with keys id, parent (None for root), p, S."""
        order = sorted(nodes, key=lambda d: d["id"])
        ids = [d["id"] for d in order]
        if ids != list(range(len(order))):
            raise DomainError("node ids must be 0..n-1")
        parent = [-1 if d["parent"] is None else int(d["parent"]) for d in order]
        prob = [float(d["p"]) for d in order]
        prices = [np.atleast_1d(np.asarray(d["S"], dtype=float)) for d in order]
        return cls(parent, prob, np.vstack(prices))


def _product_tree(depth: int, moves, s0: float) -> ScenarioTree:
    parent = [-1]
    prob = [1.0]
    price = [s0]
    frontier = [0]
    for _ in range(depth):
        nxt = []
        for node in frontier:
            for factor, p in moves:
                parent.append(node)
                prob.append(p)
                price.append(price[node] * factor)
                nxt.append(len(parent) - 1)
        frontier = nxt
    return ScenarioTree(parent, prob, np.asarray(price))


def binomial_tree(depth: int = 1, u: float = 2.0, d: float = 0.5,
                  p_up: float = 0.5, s0: float = 1.0) -> ScenarioTree:
    return _product_tree(depth, [(u, p_up), (d, 1.0 - p_up)], s0)


def trinomial_tree(depth: int = 1, factors=(2.0, 1.0, 0.5),
                   probs=(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
                   s0: float = 1.0) -> ScenarioTree:
    return _product_tree(depth, list(zip(factors, probs)), s0)


# ---------------------------------------------------------------------------
# clock and endowment


@dataclass
class ClockWeights:
    """Per-node clock increments; each root-to-leaf path sums to 1."""

    weights: np.ndarray

    def validate(self, tree: ScenarioTree) -> None:
        w = self.weights
        if len(w) != tree.n_nodes or np.any(w < 0.0):
            raise DomainError("clock weights must be nonnegative, one per node")
        for leaf in tree.leaves:
            s = sum(w[n] for n in tree.path_to(int(leaf)))
            if abs(s - 1.0) > 1e-12:
                raise DomainError(
                    f"clock weights along the path to leaf {leaf} sum to {s}"
                )


@dataclass
class EndowmentDensity:
    """Endowment charged against the same clock: E_T = sum e * weight per path."""

    values: np.ndarray

    def validate(self, tree: ScenarioTree) -> None:
        if len(self.values) != tree.n_nodes or np.any(self.values < 0.0):
            raise DomainError("endowment density must be nonnegative, one per node")

    def terminal_claim(self, tree: ScenarioTree, clock: ClockWeights) -> np.ndarray:
        out = np.empty(len(tree.leaves))
        for i, leaf in enumerate(tree.leaves):
            out[i] = sum(
                self.values[n] * clock.weights[n] for n in tree.path_to(int(leaf))
            )
        return out


def zero_endowment(tree: ScenarioTree) -> EndowmentDensity:
    return EndowmentDensity(values=np.zeros(tree.n_nodes))


def make_clock(tree: ScenarioTree, kind: str, stopping_times=None) -> ClockWeights:
    """Clock constructors: uniform, terminal, mixed, stopping_times.

    uniform charges 1/depth at every node of times 1..depth; terminal puts all
    weight on the leaves; mixed halves the uniform weights and adds 1/2 at the
    leaves.  stopping_times takes a list of stopping rules, each either a set
    of node ids (one per path) or a leaf -> time map, charging 1/n at each.
    """
    n = tree.n_nodes
    w = np.zeros(n)
    if kind == "uniform":
        w[tree.time >= 1] = 1.0 / tree.depth
    elif kind == "terminal":
        w[tree.leaves] = 1.0
    elif kind == "mixed":
        w[tree.time >= 1] = 0.5 / tree.depth
        w[tree.leaves] += 0.5
    elif kind == "stopping_times":
        if not stopping_times:
            raise DomainError("stopping_times clock requires at least one rule")
        share = 1.0 / len(stopping_times)
        for rule in stopping_times:
            for node in _stopping_nodes(tree, rule):
                w[node] += share
    else:
        raise DomainError(f"unknown clock kind {kind!r}")
    clock = ClockWeights(weights=w)
    clock.validate(tree)
    return clock


def _stopping_nodes(tree: ScenarioTree, rule) -> list[int]:
    """Resolve a stopping rule to its node set, checking adaptedness."""
    if isinstance(rule, dict):
        nodes = set()
        for leaf, t in rule.items():
            leaf = int(leaf)
            if leaf not in set(int(x) for x in tree.leaves):
                raise DomainError(f"stopping rule keyed by non-leaf node {leaf}")
            nodes.add(tree.ancestor_at(leaf, int(t)))
        rule_nodes = nodes
        # Adaptedness: two scenarios indistinguishable at the stop node must
        # stop together, i.e. the per-leaf times must be constant on each
        # resolved node's subtree.
        for node in rule_nodes:
            t = int(tree.time[node])
            for leaf in tree.leaves:
                if tree.ancestor_at(int(leaf), t) == node:
                    if int(rule[int(leaf)]) != t:
                        raise DomainError(
                            "stopping rule is not adapted: scenarios through "
                            f"node {node} stop at different times"
                        )
    else:
        rule_nodes = set(int(x) for x in rule)
    # Every path must stop exactly once.
    for leaf in tree.leaves:
        hits = [n for n in tree.path_to(int(leaf)) if n in rule_nodes]
        if len(hits) != 1:
            raise DomainError(
                f"stopping rule hits the path to leaf {leaf} {len(hits)} times"
            )
    return sorted(rule_nodes)


# ---------------------------------------------------------------------------
# martingale polytope


@dataclass
class MartingaleVertex:
    """One extreme martingale measure: conditionals, density and leaf law."""

    conditional: np.ndarray  # per-node probability given the parent
    density: np.ndarray  # Y at each node: Q(node)/P(node)
    leaf_measure: np.ndarray  # Q restricted to the leaves


@dataclass
class MartingalePolytope:
    vertices: list[MartingaleVertex]
    interior_density: np.ndarray  # strictly positive representative

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def density_matrix(self, nodes=None) -> np.ndarray:
        ys = [v.density for v in self.vertices]
        mat = np.vstack(ys)
        return mat if nodes is None else mat[:, nodes]


def _local_vertices(ds: np.ndarray) -> list[np.ndarray]:
    """Vertices of {q >= 0, sum q = 1, ds^T q = 0} for one branching.

    ds has one row per child.  Basic-solution enumeration over column
    supports of size rank; duplicates rounded away.
    """
    k, d = ds.shape
    a_full = np.vstack([np.ones(k), ds.T])  # (d+1, k)
    b = np.zeros(d + 1)
    b[0] = 1.0
    rank = np.linalg.matrix_rank(a_full, tol=1e-12)
    seen = set()
    out = []
    for support in itertools.combinations(range(k), rank):
        a_sub = a_full[:, support]
        sol, residual, r, _ = np.linalg.lstsq(a_sub, b, rcond=None)
        if r < rank:
            continue
        if np.linalg.norm(a_sub @ sol - b) > 1e-10:
            continue
        if np.any(sol < -1e-10):
            continue
        q = np.zeros(k)
        q[list(support)] = np.clip(sol, 0.0, None)
        q /= q.sum()
        key = tuple(np.round(q, 12))
        if key not in seen:
            seen.add(key)
            out.append(q)
    return out


def martingale_vertices(
    tree: ScenarioTree, max_vertices: int = 65536
) -> MartingalePolytope:
    """Enumerate the extreme points of the (closed) martingale-measure set.

    Per branching node the one-period martingale constraints cut a small
    polytope out of the simplex; global vertices are products of local ones.
    An empty local polytope, or a branch killed by every local vertex, means
    the tree violates the no-free-lunch assumption.
    """
    internal = [i for i in range(tree.n_nodes) if tree.children[i]]
    local: dict[int, list[np.ndarray]] = {}
    for i in internal:
        ch = tree.children[i]
        ds = tree.prices[ch] - tree.prices[i]
        verts = _local_vertices(ds)
        if not verts:
            raise ArbitrageError(
                f"NFLVR violated: no one-period martingale measure at node {i}"
            )
        attained = np.max(np.vstack(verts), axis=0)
        if np.any(attained <= 0.0):
            dead = [ch[j] for j in np.nonzero(attained <= 0.0)[0]]
            raise ArbitrageError(
                f"NFLVR violated: branches {dead} carry zero mass under every "
                "martingale measure"
            )
        local[i] = verts
    count = 1
    for i in internal:
        count *= len(local[i])
        if count > max_vertices:
            raise DomainError(
                f"vertex enumeration exceeds the cap ({max_vertices}); "
                "reduce depth or branching"
            )
    vertices = []
    for combo in itertools.product(*(local[i] for i in internal)):
        cond = np.ones(tree.n_nodes)
        for i, q in zip(internal, combo):
            for j, c in enumerate(tree.children[i]):
                cond[c] = q[j]
        q_node = np.ones(tree.n_nodes)
        for nidx in range(1, tree.n_nodes):
            q_node[nidx] = q_node[tree.parent[nidx]] * cond[nidx]
        density = q_node / tree.path_prob
        vertices.append(
            MartingaleVertex(
                conditional=cond,
                density=density,
                leaf_measure=q_node[tree.leaves],
            )
        )
    interior = np.mean(np.vstack([v.density for v in vertices]), axis=0)
    return MartingalePolytope(vertices=vertices, interior_density=interior)


def build_density_process(tree: ScenarioTree, q) -> np.ndarray:
    """Density process Y(node) = Q(node)/P(node) for a leaf measure Q.

    `q` is either a per-leaf measure (summing to 1) or a MartingaleVertex.
    """
    if isinstance(q, MartingaleVertex):
        return q.density.copy()
    q = np.asarray(q, dtype=float)
    if len(q) != len(tree.leaves):
        raise DomainError("leaf measure must have one entry per leaf")
    if np.any(q < 0.0) or abs(q.sum() - 1.0) > 1e-10:
        raise DomainError("leaf measure must be a probability vector")
    q_node = np.zeros(tree.n_nodes)
    for leaf, mass in zip(tree.leaves, q):
        for n in tree.path_to(int(leaf)):
            q_node[n] += mass
    return q_node / tree.path_prob


def pairing(tree: ScenarioTree, clock: ClockWeights, c, y) -> float:
    """<c, Q_kappa> = sum_nodes P(node) w(node) c(node) Y(node)."""
    pk = tree.path_prob * clock.weights
    return float(np.sum(pk * np.asarray(c, dtype=float) * np.asarray(y, dtype=float)))


def endowment_pairings(
    tree: ScenarioTree,
    polytope: MartingalePolytope,
    clock: ClockWeights,
    e: EndowmentDensity,
) -> np.ndarray:
    """<e, Y^v>_kappa per vertex (equals E^{Q_v} of the terminal endowment)."""
    pk = tree.path_prob * clock.weights
    mat = polytope.density_matrix()
    return mat @ (pk * e.values)


def hedging_prices(
    tree: ScenarioTree, polytope: MartingalePolytope, claim
) -> tuple[float, float]:
    """Lower and upper hedging prices of a per-leaf claim over the vertex set."""
    claim = np.asarray(claim, dtype=float)
    if len(claim) != len(tree.leaves):
        raise DomainError("claim must have one entry per leaf")
    vals = [float(v.leaf_measure @ claim) for v in polytope.vertices]
    return min(vals), max(vals)


def is_financeable(
    tree: ScenarioTree,
    polytope: MartingalePolytope,
    clock: ClockWeights,
    c,
    x: float,
    e: EndowmentDensity,
    tol: float = 1e-9,
) -> bool:
    """Vertex budget check: <c - e, Y^v>_kappa <= x for every vertex."""
    c = np.asarray(c, dtype=float)
    if np.any(c < 0.0):
        raise DomainError("consumption density must be nonnegative")
    pk = tree.path_prob * clock.weights
    for v in polytope.vertices:
        if float(np.sum(pk * (c - e.values) * v.density)) > x + tol:
            return False
    return True


# ---------------------------------------------------------------------------
# primal problem


@dataclass
class PrimalSolution:
    c: np.ndarray  # consumption per node (nan where the clock never charges)
    u_value: float
    u_prime: float
    multipliers: np.ndarray
    duality_gap: float
    kkt_stationarity: float
    kkt_max_violation: float
    kkt_complementarity: float
    support: np.ndarray = field(repr=False)


def _primal_context(tree, polytope, clock, e):
    pk = tree.path_prob * clock.weights
    support = pk > 0.0
    yv = polytope.density_matrix()  # (n_v, n_nodes)
    e_pair = yv @ (pk * e.values)
    return pk, support, yv, e_pair


def solve_primal(
    tree: ScenarioTree,
    polytope: MartingalePolytope,
    clock: ClockWeights,
    f: UtilityField,
    x: float,
    e: EndowmentDensity | None = None,
    *,
    gap_tol: float = 1e-8,
    lam0: np.ndarray | None = None,
) -> PrimalSolution:
    """Maximize sum P_kappa U(t, c) under the vertex budget constraints.

    Lagrangian-dual solve: the inner maximizer is c = I(t, sum lambda_v Y^v)
    node-wise, the outer minimization runs over lambda >= 0, and the result
    carries a certified duality gap together with KKT residuals.
    """
    e = e if e is not None else zero_endowment(tree)
    e.validate(tree)
    clock.validate(tree)
    pk, support, yv, e_pair = _primal_context(tree, polytope, clock, e)
    lower_hedge = float(np.min(e_pair))
    if x <= -lower_hedge + 1e-12:
        raise InfeasibleError(
            f"initial wealth {x} is below -L(E) = {-lower_hedge}: value is -inf"
        )
    sup_idx = np.nonzero(support)[0]
    yv_sup = yv[:, sup_idx]
    if np.any(np.max(yv_sup, axis=0) <= 0.0):
        raise UnboundedError(
            "a clock-charged node carries zero price under every martingale "
            "measure: the primal value is unbounded"
        )
    t_sup = tree.time[sup_idx].astype(float)
    pk_sup = pk[sup_idx]
    n_v = len(polytope.vertices)
    budget_const = x + e_pair  # strictly positive given x > -L

    def theta_and_grad(lam):
        ybar = lam @ yv_sup
        bad = ybar <= 0.0
        if np.any(bad):
            # Smooth linear barrier pointing back into the feasible cone.
            val = 1e12 * float(1.0 + np.sum(-ybar[bad]))
            grad = -1e12 * (yv_sup[:, bad] @ np.ones(int(np.sum(bad))))
            return val, grad
        c = inverse_marginal(f, t_sup, ybar)
        val = float(np.sum(pk_sup * conjugate_v(f, t_sup, ybar)) + lam @ budget_const)
        grad = -(yv_sup @ (pk_sup * c)) + budget_const
        return val, grad

    if lam0 is None:
        x_eff = max(x + lower_hedge, 1e-9)
        y0 = float(marginal_utility(f, 0.0, x_eff))
        lam0 = np.full(n_v, y0 / n_v)
    res = optimize.minimize(
        theta_and_grad,
        np.asarray(lam0, dtype=float),
        jac=True,
        method="L-BFGS-B",
        bounds=[(0.0, None)] * n_v,
        options={"maxiter": 2000, "ftol": 1e-16, "gtol": 1e-12, "maxls": 60},
    )
    lam = np.clip(res.x, 0.0, None)
    theta_val, _ = theta_and_grad(lam)
    ybar = lam @ yv_sup
    c_sup = inverse_marginal(f, t_sup, ybar)
    # Feasible rescaling certifies the duality gap from below.
    pairings = yv_sup @ (pk_sup * c_sup)
    with np.errstate(divide="ignore"):
        ratios = np.where(pairings > 0.0, budget_const / np.where(pairings > 0, pairings, 1.0), np.inf)
    scale = min(1.0, float(np.min(ratios)))
    c_feas = c_sup * scale
    u_val = float(np.sum(pk_sup * u_eval(f, t_sup, c_feas)))
    gap = theta_val - u_val
    if not (gap >= -1e-12 and gap <= gap_tol):
        raise NumericError(
            f"primal duality gap {gap:.3e} exceeds tolerance {gap_tol:.1e} "
            f"(solver status: {res.message})"
        )
    slacks = budget_const - yv_sup @ (pk_sup * c_feas)
    lam_report = _min_norm_multipliers(lam, yv_sup, ybar, slacks)
    c_full = np.full(tree.n_nodes, np.nan)
    ybar_all = lam @ yv
    ok = ybar_all > 0.0
    c_full[ok] = inverse_marginal(f, tree.time[ok].astype(float), ybar_all[ok])
    c_full[sup_idx] = c_feas
    stationarity = float(
        np.max(np.abs(marginal_utility(f, t_sup, c_feas) - ybar) / ybar)
    )
    return PrimalSolution(
        c=c_full,
        u_value=u_val,
        u_prime=float(np.sum(lam_report)),
        multipliers=lam_report,
        duality_gap=float(gap),
        kkt_stationarity=stationarity,
        kkt_max_violation=float(max(0.0, -np.min(slacks))),
        kkt_complementarity=float(np.sum(lam_report * np.clip(slacks, 0.0, None))),
        support=support,
    )


def _min_norm_multipliers(lam, yv_sup, ybar, slacks) -> np.ndarray:
    """Deterministic tie-break: minimum-norm multipliers reproducing ybar.

    Inactive constraints (positive slack) are forced to zero; among the
    active ones a ridge-regularized NNLS picks the smallest representation.
    Falls back to the solver's multipliers when the refit is not exact.
    """
    scale = float(np.sum(lam)) or 1.0
    active = slacks <= 1e-7 * max(1.0, float(np.max(np.abs(slacks))))
    if not np.any(active):
        return np.where(lam < 1e-10 * scale, 0.0, lam)
    a = yv_sup[active].T  # (n_support, n_active)
    mu = 1e-7 * scale
    a_aug = np.vstack([a, mu * np.eye(a.shape[1])])
    b_aug = np.concatenate([ybar, np.zeros(a.shape[1])])
    sol, _ = optimize.nnls(a_aug, b_aug)
    refit = np.zeros_like(lam)
    refit[np.nonzero(active)[0]] = sol
    if np.max(np.abs(refit @ yv_sup - ybar)) <= 1e-8 * float(np.max(ybar)):
        lam = refit
    return np.where(lam < 1e-10 * scale, 0.0, lam)


# ---------------------------------------------------------------------------
# dual problem


@dataclass
class DualSolution:
    y: float
    Y: np.ndarray  # optimal density per node (the solid element F * mixture)
    mixture_weights: np.ndarray
    solid_factor: np.ndarray
    v_value: float
    v_prime: float
    support: np.ndarray = field(repr=False)


def solve_dual(
    tree: ScenarioTree,
    polytope: MartingalePolytope,
    clock: ClockWeights,
    f: UtilityField,
    y: float,
    e: EndowmentDensity | None = None,
) -> DualSolution:
    """Minimize sum P_kappa [V(t, Y) + e Y] over mixtures Y = sum w_v Y^v.

    On a finite space the bipolar enlargement collapses to scaled mixtures of
    the vertex densities (the polar is taken against signed test processes,
    so no node-wise shrinking survives); the solid factor is the scalar
    mixture mass, and the Inada condition pins it at its upper bound, so the
    reported per-node factor is identically one.  Allowing a node-wise factor
    below one with a positive endowment density would shed endowment mass
    from the objective and break weak duality against the primal.
    """
    if not (y > 0.0):
        raise DomainError(f"dual problem requires y > 0, got {y} (v = +inf for y < 0)")
    e = e if e is not None else zero_endowment(tree)
    e.validate(tree)
    clock.validate(tree)
    pk, support, yv, _ = _primal_context(tree, polytope, clock, e)
    sup_idx = np.nonzero(support)[0]
    yv_sup = yv[:, sup_idx]
    t_sup = tree.time[sup_idx].astype(float)
    pk_sup = pk[sup_idx]
    e_sup = e.values[sup_idx]
    n_v = len(polytope.vertices)

    def phi_and_grad(w):
        ytil = w @ yv_sup
        bad = ytil <= 0.0
        if np.any(bad):
            val = 1e12 * float(1.0 + np.sum(-ytil[bad]))
            grad = -1e12 * (yv_sup[:, bad] @ np.ones(int(np.sum(bad))))
            return val, grad
        val = float(np.sum(pk_sup * (conjugate_v(f, t_sup, ytil) + e_sup * ytil)))
        slope = -inverse_marginal(f, t_sup, ytil) + e_sup
        grad = yv_sup @ (pk_sup * slope)
        return val, grad

    if n_v == 1:
        w = np.array([y])
        val, _ = phi_and_grad(w)
    else:
        cons = {"type": "eq", "fun": lambda w: np.sum(w) - y, "jac": lambda w: np.ones(n_v)}
        w0 = np.full(n_v, y / n_v)
        res = optimize.minimize(
            phi_and_grad,
            w0,
            jac=True,
            method="SLSQP",
            bounds=[(0.0, y)] * n_v,
            constraints=[cons],
            options={"maxiter": 2000, "ftol": 1e-14},
        )
        if not res.success and res.status != 8:
            raise NumericError(f"dual solve failed: {res.message}")
        w = np.clip(res.x, 0.0, None)
        w *= y / np.sum(w)
        val, _ = phi_and_grad(w)
    y_all = w @ yv
    y_sup = y_all[sup_idx]
    v_prime = float(
        (np.sum(pk_sup * (-inverse_marginal(f, t_sup, y_sup) * y_sup
                          + e_sup * y_sup))) / y
    )
    return DualSolution(
        y=y,
        Y=y_all,
        mixture_weights=w,
        solid_factor=np.ones(tree.n_nodes),
        v_value=val,
        v_prime=v_prime,
        support=support,
    )


def dual_certificate(
    tree: ScenarioTree,
    clock: ClockWeights,
    f: UtilityField,
    e: EndowmentDensity,
    dual: DualSolution,
) -> dict:
    """Local-optimality report for the solid factor.

    Wherever the clock charges and the endowment density vanishes, the
    objective slope in Y is strictly negative, so the optimizer must sit at
    F = 1; nodes with e > 0 may cap the density (F < 1) and are listed.
    """
    pk = tree.path_prob * clock.weights
    sup = pk > 0.0
    t = tree.time.astype(float)
    slope = np.full(tree.n_nodes, np.nan)
    ok = sup & (dual.Y > 0.0)
    slope[ok] = -np.asarray(inverse_marginal(f, t[ok], dual.Y[ok])) + e.values[ok]
    free = sup & (e.values == 0.0)
    return {
        "f_equals_one_on_free_nodes": bool(np.all(dual.solid_factor[free] == 1.0)),
        "negative_slope_on_free_nodes": bool(np.all(slope[free] < 0.0)),
        "capped_nodes": [int(i) for i in np.nonzero(sup & (dual.solid_factor < 1.0))[0]],
        "slope": slope,
    }


# ---------------------------------------------------------------------------
# certification operations


@dataclass
class ConjugacyReport:
    max_gap_u: float
    max_gap_v: float
    u_values: np.ndarray
    v_values: np.ndarray
    u_concave: bool
    u_nondecreasing: bool


def conjugacy_check(
    tree: ScenarioTree,
    polytope: MartingalePolytope,
    clock: ClockWeights,
    f: UtilityField,
    e: EndowmentDensity,
    x_grid,
    y_grid,
) -> ConjugacyReport:
    """Verify u(x) = min_y [v(y) + x y] and v(y) = max_x [u(x) - x y] on grids.

    Each outer minimum is taken over the supplied grid refined with the
    matched point from the other problem (y = u'(x), respectively x = -v'(y)).
    Weak duality makes a finite evaluation set sound: the reported gap can
    only overstate the true one, so a pass certifies the conjugacy.
    """
    x_grid = np.asarray(x_grid, dtype=float)
    y_grid = np.asarray(y_grid, dtype=float)
    primal_cache: dict[float, PrimalSolution] = {}
    dual_cache: dict[float, DualSolution] = {}

    def primal_at(x):
        key = round(float(x), 12)
        if key not in primal_cache:
            primal_cache[key] = solve_primal(tree, polytope, clock, f, key, e)
        return primal_cache[key]

    def dual_at(y):
        key = round(float(y), 12)
        if key not in dual_cache:
            dual_cache[key] = solve_dual(tree, polytope, clock, f, key, e)
        return dual_cache[key]

    u_vals = np.array([primal_at(x).u_value for x in x_grid])
    v_vals = np.array([dual_at(y).v_value for y in y_grid])
    gap_u = 0.0
    for x, u_x in zip(x_grid, u_vals):
        probes = list(y_grid) + [primal_at(x).u_prime]
        inner = min(dual_at(y).v_value + x * y for y in probes if y > 0.0)
        gap_u = max(gap_u, abs(u_x - inner))
    gap_v = 0.0
    for y, v_y in zip(y_grid, v_vals):
        probes = list(x_grid) + [-dual_at(y).v_prime]
        outer = max(primal_at(x).u_value - x * y for x in probes)
        gap_v = max(gap_v, abs(v_y - outer))
    order = np.argsort(x_grid)
    du = np.diff(u_vals[order])
    dx = np.diff(x_grid[order])
    slopes = du / dx
    return ConjugacyReport(
        max_gap_u=float(gap_u),
        max_gap_v=float(gap_v),
        u_values=u_vals,
        v_values=v_vals,
        u_concave=bool(np.all(np.diff(slopes) <= 1e-9)),
        u_nondecreasing=bool(np.all(du >= -1e-9)),
    )


def recover_primal_from_dual(
    tree: ScenarioTree,
    polytope: MartingalePolytope,
    clock: ClockWeights,
    f: UtilityField,
    e: EndowmentDensity,
    dual: DualSolution,
    *,
    match_tol: float = 1e-6,
) -> tuple[PrimalSolution, dict]:
    """Map the dual optimizer to consumption via c = I(t, Y) and cross-check.

    Checks performed: node-wise agreement with the direct primal solve at
    x = -v'(y), the derivative/budget identity
    y v'(y) = -<I(Y), Y> + <e, Y>, and the Fenchel chain
    U(c) = sum P_k V(t, Y) + <I(Y), Y> = v(y) - y v'(y) = u(x).
    """
    pk = tree.path_prob * clock.weights
    sup = np.nonzero(pk > 0.0)[0]
    t_sup = tree.time[sup].astype(float)
    y_sup = dual.Y[sup]
    if np.any(y_sup <= 0.0):
        raise NumericError("dual optimizer vanishes on a charged node")
    c_sup = inverse_marginal(f, t_sup, y_sup)
    x = -dual.v_prime
    primal = solve_primal(tree, polytope, clock, f, x, e)
    c_primal = primal.c[sup]
    max_diff = float(np.max(np.abs(c_sup - c_primal)))
    if max_diff > match_tol:
        raise NumericError(
            f"dual-recovered consumption differs from the primal solve by "
            f"{max_diff:.3e} (> {match_tol:.1e})"
        )
    pair_ic = float(np.sum(pk[sup] * c_sup * y_sup))
    pair_e = float(np.sum(pk[sup] * e.values[sup] * y_sup))
    budget_residual = dual.y * dual.v_prime - (-pair_ic + pair_e)
    u_of_c = float(np.sum(pk[sup] * u_eval(f, t_sup, c_sup)))
    v_of_y = float(np.sum(pk[sup] * (conjugate_v(f, t_sup, y_sup))))
    fenchel_residual = u_of_c - (v_of_y + pair_ic)
    # Lemma-style chain: U(c) = v(y) - y v'(y) with v the endowment-inclusive value.
    chain_residual = u_of_c - (dual.v_value - dual.y * dual.v_prime)
    checks = {
        "max_consumption_diff": max_diff,
        "budget_residual": float(budget_residual),
        "fenchel_residual": float(fenchel_residual),
        "chain_residual": float(chain_residual),
        "x": x,
        "u_value": u_of_c,
    }
    return primal, checks


def boundary_behavior_check(
    tree: ScenarioTree,
    polytope: MartingalePolytope,
    clock: ClockWeights,
    f: UtilityField,
    e: EndowmentDensity,
    *,
    approach_steps: int = 6,
    approach_start: float = 0.5,
    y_levels=(1e2, 1e3, 1e4),
) -> dict:
    """Boundary behavior of u' near -L(E) and of -v'(y) for large y."""
    claim = e.terminal_claim(tree, clock)
    lower, _ = hedging_prices(tree, polytope, claim)
    u_primes = []
    for k in range(approach_steps):
        xk = -lower + approach_start * 2.0 ** (-k)
        h = 0.05 * (xk + lower)
        up = (
            solve_primal(tree, polytope, clock, f, xk + h, e).u_value
            - solve_primal(tree, polytope, clock, f, xk - h, e).u_value
        ) / (2.0 * h)
        u_primes.append(up)
    u_primes = np.asarray(u_primes)
    neg_v_primes = np.array(
        [-solve_dual(tree, polytope, clock, f, yy, e).v_prime for yy in y_levels]
    )
    gaps = np.abs(neg_v_primes - lower)
    x_grid = -lower + np.array([0.5, 1.0, 2.0, 4.0])
    u_prime_grid = np.array(
        [solve_primal(tree, polytope, clock, f, xx, e).u_prime for xx in x_grid]
    )
    return {
        "lower_hedging_price": lower,
        "u_prime_sequence": u_primes,
        "u_prime_increasing": bool(np.all(np.diff(u_primes) > 0.0)),
        "neg_v_prime_levels": neg_v_primes,
        "neg_v_prime_monotone": bool(np.all(np.diff(gaps) <= 1e-12)),
        "neg_v_prime_final_gap": float(gaps[-1]),
        "u_prime_grid_decreasing": bool(np.all(np.diff(u_prime_grid) < 0.0)),
    }


@dataclass
class OracleResult:
    value: float
    c: np.ndarray
    values_per_stage: list[float]


def brute_force_oracle(
    tree: ScenarioTree,
    polytope: MartingalePolytope,
    clock: ClockWeights,
    f: UtilityField,
    x: float,
    e: EndowmentDensity | None = None,
    *,
    grid_points: int = 13,
    refinements: int = 2,
    chunk: int = 200_000,
) -> OracleResult:
    """Grid-search certificate for the primal value on tiny trees.

    Enumerates the consumption box on the clock-charged nodes (at most six),
    filters by the vertex budget constraints and refines twice around the
    best point.  Independent of the Lagrangian solver by construction.
    """
    e = e if e is not None else zero_endowment(tree)
    pk, support, yv, e_pair = _primal_context(tree, polytope, clock, e)
    sup_idx = np.nonzero(support)[0]
    m = len(sup_idx)
    if m > 6:
        raise DomainError(f"oracle is limited to 6 consumption nodes, got {m}")
    t_sup = tree.time[sup_idx].astype(float)
    pk_sup = pk[sup_idx]
    yv_sup = yv[:, sup_idx]
    budget_const = x + e_pair
    if np.any(budget_const <= 0.0):
        # Even zero consumption violates some vertex budget: x < -L(E).
        raise InfeasibleError(
            f"oracle: empty feasible set, x = {x} is below -L(E) = "
            f"{-float(np.min(e_pair))}"
        )
    hi = np.empty(m)
    for jj in range(m):
        cols = yv_sup[:, jj]
        ok = cols > 0.0
        hi[jj] = float(np.min(budget_const[ok] / (pk_sup[jj] * cols[ok])))
    lo = hi * 1e-6
    best_c = None
    best_val = -np.inf
    values_per_stage = []
    for stage in range(refinements + 1):
        axes = [np.linspace(lo[j], hi[j], grid_points) for j in range(m)]
        found_feasible = False
        for block in _grid_blocks(axes, chunk):
            lhs = block @ (pk_sup[None, :] * yv_sup).T  # (chunk, n_v)
            feas = np.all(lhs <= budget_const[None, :] + 1e-12, axis=1)
            if not np.any(feas):
                continue
            found_feasible = True
            cand = block[feas]
            utils = np.sum(
                pk_sup[None, :] * u_eval(f, t_sup[None, :], cand), axis=1
            )
            k = int(np.argmax(utils))
            if utils[k] > best_val:
                best_val = float(utils[k])
                best_c = cand[k].copy()
        if best_c is None:
            raise InfeasibleError(
                "oracle found no feasible consumption on the grid "
                f"(x = {x} may be below -L(E))"
            )
        values_per_stage.append(best_val)
        if stage < refinements:
            span = (hi - lo) / (grid_points - 1)
            lo = np.maximum(best_c - 1.0 * span, hi * 1e-9)
            hi = best_c + 1.0 * span
        if not found_feasible:
            break
    c_full = np.full(tree.n_nodes, np.nan)
    c_full[sup_idx] = best_c
    return OracleResult(value=best_val, c=c_full, values_per_stage=values_per_stage)


def _grid_blocks(axes, chunk):
    """Yield blocks of the cartesian product of the axes as (rows, m) arrays."""
    m = len(axes)
    sizes = [len(a) for a in axes]
    total = int(np.prod(sizes))
    idx = 0
    while idx < total:
        stop = min(idx + chunk, total)
        flat = np.arange(idx, stop)
        block = np.empty((stop - idx, m))
        rem = flat
        for j in range(m - 1, -1, -1):
            block[:, j] = axes[j][rem % sizes[j]]
            rem = rem // sizes[j]
        yield block
        idx = stop
