"""Distributed SPDFP2O over a graph of agents, synchronous and asynchronous.

Agent ``n`` privately holds ``(f_n, g_n)``, its primal ``x_n``, the dual
``y_n`` for ``g_n`` and one dual slot ``v_{n,m}(n)`` per incident edge. It
reads neighbor information only from its mailbox, which neighbors fill when
they publish at the end of an activation. A published message carries the
sender's ``x``, ``y``, its slot on the shared edge, and the local quantity

    a_m = x_m - gamma grad f_m(x_m) - lam (D^T v)_m - lam y_m

so that receivers never need ``f_m``.

The simulator is a deterministic sequential loop: within a tick every active
agent computes from the old mailboxes, then all of them publish.

Node indices are 0-based and every edge is stored once as ``(n, m)`` with
``n < m``.
"""
from __future__ import annotations

import dataclasses
import time
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .exceptions import ConfigurationError, ParameterError, ParseError, ProtocolError
from .km import CoordinateSampler, StoppingRule
from .minibatch import BatchedProblem
from .operators import LinearMap
from .prox import PairConsensusIndicator, SeparableSum, separable_smooth
from .solvers import CompositeProblem, PdfpParams, SolverState, validate_params
from .trace import IterationTrace, TraceRecord

# activation sets are drawn exactly like coordinate blocks
ActivationSampler = CoordinateSampler

ER_MAX_ATTEMPTS = 100


# ---------------------------------------------------------------------------
# graphs


@dataclass(frozen=True)
class NetworkGraph:
    """Connected undirected graph without self-loops."""

    n_nodes: int
    edges: tuple

    def __post_init__(self):
        canon = []
        seen = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ParameterError(f"self-loop on node {a}")
            if not (0 <= a < self.n_nodes and 0 <= b < self.n_nodes):
                raise ParameterError(f"edge ({a}, {b}) references a node outside 0..{self.n_nodes - 1}")
            e = (min(a, b), max(a, b))
            if e in seen:
                raise ParameterError(f"duplicate edge {e}")
            seen.add(e)
            canon.append(e)
        canon.sort()
        object.__setattr__(self, "edges", tuple(canon))
        nbrs = [[] for _ in range(self.n_nodes)]
        for a, b in canon:
            nbrs[a].append(b)
            nbrs[b].append(a)
        object.__setattr__(self, "neighbors", tuple(tuple(sorted(x)) for x in nbrs))
        if self.n_nodes < 1 or not _connected(self.n_nodes, self.neighbors):
            raise ParameterError("graph must be connected")

    @property
    def degrees(self):
        return np.array([len(x) for x in self.neighbors])

    @property
    def max_degree(self):
        return int(self.degrees.max()) if self.n_nodes > 1 else 0

    @property
    def n_edges(self):
        return len(self.edges)

    def edge_index(self):
        return {e: i for i, e in enumerate(self.edges)}


def _connected(n, neighbors):
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for w in neighbors[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == n


def ring_graph(n):
    if n < 3:
        raise ParameterError("a ring needs at least 3 nodes")
    return NetworkGraph(n, tuple((i, (i + 1) % n) for i in range(n)))


def path_graph(n):
    return NetworkGraph(n, tuple((i, i + 1) for i in range(n - 1)))


def star_graph(n):
    """Node 0 is the center."""
    if n < 2:
        raise ParameterError("a star needs at least 2 nodes")
    return NetworkGraph(n, tuple((0, i) for i in range(1, n)))


def complete_graph(n):
    return NetworkGraph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def erdos_renyi_graph(n, p, seed=0, max_attempts=ER_MAX_ATTEMPTS):
    """G(n, p), redrawn until connected; fails after ``max_attempts`` draws."""
    if not 0 <= p <= 1:
        raise ParameterError(f"edge probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    for _ in range(max_attempts):
        keep = rng.random(len(iu)) < p
        edges = tuple(zip(iu[keep].tolist(), ju[keep].tolist()))
        nbrs = [[] for _ in range(n)]
        for a, b in edges:
            nbrs[a].append(b)
            nbrs[b].append(a)
        if _connected(n, nbrs):
            return NetworkGraph(n, edges)
    raise ParameterError(f"no connected G({n}, {p}) graph in {max_attempts} attempts")


def make_graph(kind, n, p=None, seed=0):
    if kind == "ring":
        return ring_graph(n)
    if kind == "star":
        return star_graph(n)
    if kind == "complete":
        return complete_graph(n)
    if kind == "path":
        return path_graph(n)
    if kind == "er":
        if p is None:
            raise ParameterError("Erdos-Renyi graphs need an edge probability p")
        return erdos_renyi_graph(n, p, seed)
    raise ParameterError(f"unknown graph kind {kind!r}")


def read_graph(path):
    """One ``n m`` edge per line, 0-based, ``#`` comments."""
    edges = []
    seen = set()
    with open(path) as fh:
        for lineno, text in enumerate(fh, start=1):
            body = text.split("#", 1)[0].split()
            if not body:
                continue
            if len(body) != 2:
                raise ParseError(f"expected 'n m', got {text.strip()!r}", lineno)
            try:
                a, b = int(body[0]), int(body[1])
            except ValueError:
                raise ParseError(f"non-integer node id in {text.strip()!r}", lineno) from None
            if a < 0 or b < 0:
                raise ParseError("node ids are 0-based and nonnegative", lineno)
            if a == b:
                raise ParseError(f"self-loop on node {a}", lineno)
            e = (min(a, b), max(a, b))
            if e in seen:
                raise ParseError(f"duplicate edge {e}", lineno)
            seen.add(e)
            edges.append(e)
    if not edges:
        raise ParseError("graph file contains no edges", line=1)
    n = max(max(e) for e in edges) + 1
    return NetworkGraph(n, tuple(edges))


def write_graph(path, graph: NetworkGraph):
    with open(path, "w") as fh:
        fh.write(f"# {graph.n_nodes} nodes, {graph.n_edges} edges\n")
        for a, b in graph.edges:
            fh.write(f"{a} {b}\n")


# ---------------------------------------------------------------------------
# lifted (centralized) view


def build_edge_operator(graph: NetworkGraph, dim=1):
    """``D x = ((x_n, x_m))_{(n, m) in E}`` on flat ``X^N`` with output layout ``(E, 2, dim)``.

    The adjoint sums each node's own slots, and ``D^T D`` scales node ``n``
    by its degree.
    """
    N, E = graph.n_nodes, graph.n_edges
    heads = np.array([e[0] for e in graph.edges], dtype=np.intp)
    tails = np.array([e[1] for e in graph.edges], dtype=np.intp)
    cols = np.arange(E)
    S_head = sp.csr_matrix((np.ones(E), (heads, cols)), shape=(N, E))
    S_tail = sp.csr_matrix((np.ones(E), (tails, cols)), shape=(N, E))

    def apply(x):
        X = np.reshape(x, (N, dim))
        return np.stack([X[heads], X[tails]], axis=1).ravel()

    def adjoint(y):
        Y = np.reshape(y, (E, 2, dim))
        return (S_head @ Y[:, 0] + S_tail @ Y[:, 1]).ravel()

    return LinearMap(apply=apply, adjoint=adjoint, in_dim=N * dim, out_dim=2 * E * dim)


def consensus_h(y, n_edges, dim=1):
    """``sum_e iota_{C2}(y_e)``: 0 when both slots of every edge agree, else inf."""
    return PairConsensusIndicator(n_edges, dim).value(np.asarray(y, dtype=float))


def lift_network_problem(batched: BatchedProblem, graph: NetworkGraph):
    """Product-space problem ``f + g + h o D`` whose SPDFP2O iterates the network reproduces."""
    if batched.n_batches != graph.n_nodes:
        raise ConfigurationError(
            f"{batched.n_batches} local problems for {graph.n_nodes} agents"
        )
    q = batched.dim
    return CompositeProblem(
        f=separable_smooth(batched.fs, lipschitz=batched.lipschitz),
        g=SeparableSum(batched.gs),
        h=PairConsensusIndicator(graph.n_edges, q),
        D=build_edge_operator(graph, q),
    )


def validate_network_params(batched: BatchedProblem, graph: NetworkGraph, gamma="auto",
                            lam="auto", opnorm=None):
    """``lambda_max(D D^T)`` is the maximum degree unless an estimate is passed."""
    if opnorm is None:
        opnorm = graph.max_degree
    return validate_params(lift_network_problem(batched, graph), gamma=gamma, lam=lam,
                           opnorm=opnorm)


def block_partition(graph: NetworkGraph, dim):
    """Blocks ``S_n = ((v_e(n))_{e owned by n}, y_n, x_n)`` of the flat lifted vector."""
    E, N = graph.n_edges, graph.n_nodes
    ydom = 2 * E * dim
    owned = [[] for _ in range(N)]
    for e, (a, b) in enumerate(graph.edges):
        owned[a].append(np.arange(dim) + (2 * e) * dim)
        owned[b].append(np.arange(dim) + (2 * e + 1) * dim)
    blocks = []
    for n in range(N):
        local = np.arange(n * dim, (n + 1) * dim)
        parts = owned[n] + [ydom + local, ydom + N * dim + local]
        blocks.append(np.concatenate(parts))
    return blocks


# ---------------------------------------------------------------------------
# agents


@dataclass(frozen=True)
class Message:
    """What agent ``sender`` publishes to one neighbor."""

    sender: int
    x: np.ndarray
    y: np.ndarray
    dual: np.ndarray  # sender's slot on the shared edge
    a: np.ndarray


@dataclass(frozen=True)
class AgentState:
    node: int
    x: np.ndarray
    y: np.ndarray
    duals: dict  # neighbor -> own slot v_{n,m}(n)
    grad: np.ndarray  # grad f_n(x), refreshed whenever x changes
    mailbox: dict  # neighbor -> latest Message

    def dual_sum(self):
        """``(D^T v)_n``, the sum of the agent's own slots."""
        total = np.zeros_like(self.x)
        for m in sorted(self.duals):
            total = total + self.duals[m]
        return total

    def received(self, m):
        try:
            return self.mailbox[m]
        except KeyError:
            raise ProtocolError(f"agent {self.node} has no message from neighbor {m}") from None


def local_quantity_a(agent: AgentState, gamma, lam):
    """``x_n - gamma grad f_n(x_n) - lam (D^T v)_n - lam y_n``."""
    return agent.x - gamma * agent.grad - lam * agent.dual_sum() - lam * agent.y


def local_dual_update(agent: AgentState, m, a_n):
    """New own slot on edge ``{n, m}``.

    ``(a_n - a_m)/2 + (v(n) - v(m))/2``, valid whether or not the two slots
    are currently antisymmetric.
    """
    msg = agent.received(m)
    return 0.5 * (a_n - msg.a) + 0.5 * (agent.duals[m] - msg.dual)


def local_y_update(agent: AgentState, g_n, gamma, lam):
    arg = agent.x - gamma * agent.grad + (1.0 - lam) * agent.y - lam * agent.dual_sum()
    return g_n.residual(arg, gamma / lam)


def local_x_update(agent: AgentState, new_duals, new_y, gamma, lam):
    total = np.zeros_like(agent.x)
    for m in sorted(new_duals):
        total = total + new_duals[m]
    return agent.x - gamma * agent.grad - lam * total - lam * new_y


def activate(agent: AgentState, f_n, g_n, params: PdfpParams):
    """Run one local update; the mailbox is left untouched."""
    gamma, lam = params.gamma, params.lam
    a_n = local_quantity_a(agent, gamma, lam)
    new_duals = {m: local_dual_update(agent, m, a_n) for m in agent.duals}
    new_y = local_y_update(agent, g_n, gamma, lam)
    new_x = local_x_update(agent, new_duals, new_y, gamma, lam)
    return dataclasses.replace(agent, x=new_x, y=new_y, duals=new_duals, grad=f_n.grad(new_x))


def publish(agent: AgentState, params: PdfpParams):
    """Messages for every neighbor, keyed by recipient."""
    a = local_quantity_a(agent, params.gamma, params.lam)
    return {m: Message(agent.node, agent.x, agent.y, agent.duals[m], a) for m in agent.duals}


@dataclass(frozen=True)
class NetworkState:
    graph: NetworkGraph
    agents: tuple

    @property
    def x(self):
        return np.stack([ag.x for ag in self.agents])

    @property
    def mean_x(self):
        return self.x.mean(axis=0)

    def consensus_residual(self):
        X = self.x
        return float(np.linalg.norm(X - X.mean(axis=0), axis=1).max())

    def edge_duals(self):
        """Slots as an ``(E, 2, q)`` array in canonical edge order."""
        return np.stack([
            np.stack([self.agents[a].duals[b], self.agents[b].duals[a]])
            for a, b in self.graph.edges
        ])

    def antisymmetry_gap(self):
        V = self.edge_duals()
        return float(np.abs(V[:, 0] + V[:, 1]).max(initial=0.0))

    def to_solver_state(self):
        return SolverState(
            v=self.edge_duals().ravel(),
            y=np.concatenate([ag.y for ag in self.agents]),
            x=np.concatenate([ag.x for ag in self.agents]),
        )


def _deliver(agents, senders, params):
    agents = list(agents)
    boxes = {}
    for n in senders:
        for m, msg in publish(agents[n], params).items():
            boxes.setdefault(m, dict(agents[m].mailbox))[n] = msg
    for m, box in boxes.items():
        agents[m] = dataclasses.replace(agents[m], mailbox=box)
    return tuple(agents)


def init_network(batched: BatchedProblem, graph: NetworkGraph, params: PdfpParams,
                 x0=None, y0=None, v0=None):
    """Build agents from ``(N, q)`` primal/dual arrays and an ``(E, 2, q)`` slot array.

    Everything defaults to zero; all agents publish once so every mailbox is
    filled before the first tick.
    """
    N, q = graph.n_nodes, batched.dim
    if batched.n_batches != N:
        raise ConfigurationError(f"{batched.n_batches} local problems for {N} agents")
    X = np.zeros((N, q)) if x0 is None else np.asarray(x0, dtype=float).reshape(N, q)
    Y = np.zeros((N, q)) if y0 is None else np.asarray(y0, dtype=float).reshape(N, q)
    V = np.zeros((graph.n_edges, 2, q)) if v0 is None else np.asarray(v0, dtype=float).reshape(graph.n_edges, 2, q)
    duals = [dict() for _ in range(N)]
    for e, (a, b) in enumerate(graph.edges):
        duals[a][b] = V[e, 0].copy()
        duals[b][a] = V[e, 1].copy()
    agents = tuple(
        AgentState(node=n, x=X[n].copy(), y=Y[n].copy(), duals=duals[n],
                   grad=batched.fs[n].grad(X[n]), mailbox={})
        for n in range(N)
    )
    return NetworkState(graph, _deliver(agents, range(N), params))


def network_from_solver_state(state: SolverState, batched, graph, params):
    N, q = graph.n_nodes, batched.dim
    return init_network(batched, graph, params, x0=state.x.reshape(N, q),
                        y0=state.y.reshape(N, q), v0=state.v.reshape(graph.n_edges, 2, q))


def _check_round_params(net: NetworkState, batched: BatchedProblem, params: PdfpParams):
    bound = 1.0 / (net.graph.max_degree + 1.0)
    if params.lam > bound:
        raise ConfigurationError(
            f"lambda {params.lam!r} exceeds bound {bound!r} = 1/(opnorm+1) with opnorm = max degree"
        )
    if not 0 < params.gamma < 2 * batched.beta:
        raise ConfigurationError(
            f"gamma {params.gamma!r} violates 0 < gamma < 2*beta = {2 * batched.beta!r}"
        )


def async_round(net: NetworkState, batched: BatchedProblem, params: PdfpParams, active):
    """Agents in ``active`` update from their mailboxes, then publish; everyone else holds."""
    _check_round_params(net, batched, params)
    active = sorted(set(int(n) for n in active))
    for n in active:
        if not 0 <= n < net.graph.n_nodes:
            raise ParameterError(f"agent {n} does not exist")
    agents = list(net.agents)
    for n in active:
        agents[n] = activate(net.agents[n], batched.fs[n], batched.gs[n], params)
    return NetworkState(net.graph, _deliver(agents, active, params))


def sync_round(net: NetworkState, batched: BatchedProblem, params: PdfpParams):
    """Every agent updates from the old published values, then all publish."""
    return async_round(net, batched, params, range(net.graph.n_nodes))


def network_distance(a: NetworkState, b: NetworkState, lam):
    """``||a - b||_lam`` over all slots, ``y`` and ``x``."""
    dv = a.edge_duals() - b.edge_duals()
    dy = np.stack([p.y - r.y for p, r in zip(a.agents, b.agents)])
    dx = a.x - b.x
    return float(np.sqrt(np.vdot(dx, dx) + lam * (np.vdot(dv, dv) + np.vdot(dy, dy))))


def _run(net, batched, params, stop, sampler):
    _check_round_params(net, batched, params)
    trace = IterationTrace()
    t0 = time.perf_counter()
    everyone = tuple(range(net.graph.n_nodes))
    for k in range(stop.max_iter):
        active = everyone if sampler is None else sampler.sample()
        new = async_round(net, batched, params, active)
        check = sampler is None or (k + 1) % stop.check_every == 0 or k + 1 == stop.max_iter
        res = None
        if check:
            if sampler is None:
                res = network_distance(new, net, params.lam)
            else:
                res = network_distance(sync_round(new, batched, params), new, params.lam)
        net = new
        trace.iterations = k + 1
        done = res is not None and res <= stop.tol
        if k % stop.log_every == 0 or done or k + 1 == stop.max_iter:
            trace.append(TraceRecord(
                iter=k + 1, time_s=time.perf_counter() - t0,
                objective=batched.objective(net.mean_x), fp_residual=res,
                consensus_residual=net.consensus_residual(),
                active_set=None if sampler is None else tuple(active),
            ))
        if not np.all(np.isfinite(net.x)):
            raise ConfigurationError(f"non-finite iterate at iteration {k + 1}; check step sizes")
        if done:
            trace.converged = True
            break
    return net, trace


def run_sync(net: NetworkState, batched: BatchedProblem, params: PdfpParams,
             stop: Optional[StoppingRule] = None):
    """Synchronous rounds until ``||u^{k+1} - u^k||_lam <= stop.tol``."""
    return _run(net, batched, params, stop or StoppingRule(), None)


def run_async(net: NetworkState, batched: BatchedProblem, params: PdfpParams,
              sampler: ActivationSampler, stop: Optional[StoppingRule] = None):
    """Random activations drawn by ``sampler``.

    Every ``stop.check_every`` ticks the full fixed-point residual (one
    virtual synchronous round) is compared with ``stop.tol``.
    """
    if sampler.n_blocks != net.graph.n_nodes:
        raise ConfigurationError(
            f"sampler covers {sampler.n_blocks} agents, graph has {net.graph.n_nodes}"
        )
    return _run(net, batched, params, stop or StoppingRule(check_every=net.graph.n_nodes), sampler)
