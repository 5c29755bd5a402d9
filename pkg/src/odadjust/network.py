"""Network model: directed graph, polynomial link costs, commodities, observations.

The commodity-disaggregated flow vector X is laid out commodity-major: the block
X[i*n_links:(i+1)*n_links] holds commodity i's flow on every link.  All structure
matrices follow the sign convention "-1 leaves, +1 enters" for both node-link
incidence and origin-destination incidence.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (
    DanglingReference,
    DimensionMismatch,
    DuplicateId,
    MalformedInput,
    NegativeCoefficient,
)
from .errors import UnreachableDestination


@dataclass(frozen=True)
class CostFunction:
    """Polynomial travel time t(x) = sum_j coeffs[j] * x**j.

    Nonnegative coefficients keep t nonnegative and non-decreasing on x >= 0,
    which is all the equilibrium theory needs.
    """

    coeffs: tuple

    def __post_init__(self):
        cs = tuple(float(c) for c in self.coeffs)
        if len(cs) == 0:
            raise MalformedInput("cost function needs at least one coefficient")
        if any(c < 0.0 for c in cs):
            raise NegativeCoefficient("negative coefficient in cost polynomial %r" % (cs,))
        object.__setattr__(self, "coeffs", cs)

    def value(self, x):
        out = 0.0
        for c in reversed(self.coeffs):
            out = out * x + c
        return out

    def derivative(self, x):
        out = 0.0
        for j in range(len(self.coeffs) - 1, 0, -1):
            out = out * x + j * self.coeffs[j]
        return out

    def integral(self, x):
        # int_0^x t(u) du, used by the Beckmann objective
        out = 0.0
        for j in range(len(self.coeffs) - 1, -1, -1):
            out = out * x + self.coeffs[j] / (j + 1)
        return out * x


@dataclass(frozen=True)
class Link:
    id: object
    tail: object
    head: object
    cost: CostFunction


@dataclass(frozen=True)
class Commodity:
    origin: object
    destination: object
    target_demand: float

    def __post_init__(self):
        if self.origin == self.destination:
            raise MalformedInput(
                "commodity origin and destination coincide (%r)" % (self.origin,)
            )
        if not np.isfinite(self.target_demand) or self.target_demand < 0.0:
            raise MalformedInput(
                "commodity %r -> %r has invalid target demand %r"
                % (self.origin, self.destination, self.target_demand)
            )


class Network:
    """Validated road network with demands and (possibly partial) flow observations.

    Instances are treated as immutable after construction; every derived array
    (incidence maps, padded coefficient tables) is built once here.
    """

    def __init__(self, nodes, links, commodities, observations=None,
                 eta1=1.0, eta2=1.0, allow_self_loops=False):
        self.nodes = tuple(nodes)
        self.links = tuple(links)
        self.commodities = tuple(commodities)
        self.observations = dict(observations or {})
        self.eta1 = float(eta1)
        self.eta2 = float(eta2)

        if self.eta1 < 0.0 or self.eta2 < 0.0:
            raise MalformedInput("objective weights must be nonnegative")

        # id -> index maps, rejecting duplicates
        self.node_index = {}
        for idx, nid in enumerate(self.nodes):
            if nid in self.node_index:
                raise DuplicateId("duplicate node id %r" % (nid,))
            self.node_index[nid] = idx
        self.link_index = {}
        for idx, lk in enumerate(self.links):
            if lk.id in self.link_index:
                raise DuplicateId("duplicate link id %r" % (lk.id,))
            self.link_index[lk.id] = idx

        for lk in self.links:
            if lk.tail not in self.node_index:
                raise DanglingReference("link %r references unknown node %r" % (lk.id, lk.tail))
            if lk.head not in self.node_index:
                raise DanglingReference("link %r references unknown node %r" % (lk.id, lk.head))
            if lk.tail == lk.head and not allow_self_loops:
                raise MalformedInput("link %r is a self-loop" % (lk.id,))

        for com in self.commodities:
            if com.origin not in self.node_index:
                raise DanglingReference("commodity references unknown node %r" % (com.origin,))
            if com.destination not in self.node_index:
                raise DanglingReference(
                    "commodity references unknown node %r" % (com.destination,)
                )

        for lid, flow in self.observations.items():
            if lid not in self.link_index:
                raise DanglingReference("observation references unknown link %r" % (lid,))
            if not np.isfinite(flow) or flow < 0.0:
                raise MalformedInput("observed flow on link %r is invalid: %r" % (lid, flow))

        self.tails = np.array([self.node_index[lk.tail] for lk in self.links], dtype=np.intp)
        self.heads = np.array([self.node_index[lk.head] for lk in self.links], dtype=np.intp)

        # adjacency: per node, the outgoing (link index, head index) pairs in link order
        out = [[] for _ in self.nodes]
        for a in range(len(self.links)):
            out[self.tails[a]].append((a, int(self.heads[a])))
        self.out_links = tuple(tuple(row) for row in out)

        self.target_demands = np.array(
            [com.target_demand for com in self.commodities], dtype=float
        )
        self.origin_idx = np.array(
            [self.node_index[com.origin] for com in self.commodities], dtype=np.intp
        )
        self.destination_idx = np.array(
            [self.node_index[com.destination] for com in self.commodities], dtype=np.intp
        )

        # observations in link order for vectorized objective evaluation
        obs_pairs = [(self.link_index[lid], float(fl)) for lid, fl in self.observations.items()]
        obs_pairs.sort()
        self.obs_links = np.array([p[0] for p in obs_pairs], dtype=np.intp)
        self.obs_flows = np.array([p[1] for p in obs_pairs], dtype=float)

        # padded coefficient table (n_links x max_degree+1) for vectorized evals
        deg = max(len(lk.cost.coeffs) for lk in self.links) if self.links else 1
        cmat = np.zeros((len(self.links), deg))
        for a, lk in enumerate(self.links):
            cmat[a, : len(lk.cost.coeffs)] = lk.cost.coeffs
        self._coeff = cmat
        self._dcoeff = cmat[:, 1:] * np.arange(1, deg) if deg > 1 else np.zeros((len(self.links), 0))
        self._icoeff = cmat / np.arange(1, deg + 1)

        self._check_reachability()

    # -- derived sizes ------------------------------------------------------

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_links(self):
        return len(self.links)

    @property
    def n_commodities(self):
        return len(self.commodities)

    # -- vectorized cost evaluations ---------------------------------------

    def link_times(self, v):
        """t_a(v_a) for every link, vectorized Horner evaluation."""
        v = np.asarray(v, dtype=float)
        out = np.zeros_like(v)
        for j in range(self._coeff.shape[1] - 1, -1, -1):
            out = out * v + self._coeff[:, j]
        return out

    def link_time_derivs(self, v):
        """t_a'(v_a) for every link."""
        v = np.asarray(v, dtype=float)
        out = np.zeros_like(v)
        for j in range(self._dcoeff.shape[1] - 1, -1, -1):
            out = out * v + self._dcoeff[:, j]
        return out

    def link_time_integrals(self, v):
        """int_0^{v_a} t_a(u) du for every link."""
        v = np.asarray(v, dtype=float)
        out = np.zeros_like(v)
        for j in range(self._icoeff.shape[1] - 1, -1, -1):
            out = out * v + self._icoeff[:, j]
        return out * v

    # -- misc ---------------------------------------------------------------

    def _check_reachability(self):
        reach_cache = {}
        for com in self.commodities:
            o = self.node_index[com.origin]
            if o not in reach_cache:
                seen = np.zeros(self.n_nodes, dtype=bool)
                seen[o] = True
                queue = deque([o])
                while queue:
                    u = queue.popleft()
                    for _, w in self.out_links[u]:
                        if not seen[w]:
                            seen[w] = True
                            queue.append(w)
                reach_cache[o] = seen
            if not reach_cache[o][self.node_index[com.destination]]:
                raise UnreachableDestination(
                    "destination %r not reachable from origin %r"
                    % (com.destination, com.origin)
                )

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.links == other.links
            and self.commodities == other.commodities
            and self.observations == other.observations
            and self.eta1 == other.eta1
            and self.eta2 == other.eta2
        )

    def __repr__(self):
        return "Network(%d nodes, %d links, %d commodities, %d observed)" % (
            self.n_nodes,
            self.n_links,
            self.n_commodities,
            len(self.observations),
        )


@dataclass(frozen=True)
class StructureMatrices:
    """Sparse structure matrices tying flows, demands and potentials together.

    A      node-link incidence, n_nodes x n_links, -1 at the tail, +1 at the head
    Gamma  od incidence, (n_commodities*n_nodes) x n_commodities, block-diagonal
           with -1 at the origin and +1 at the destination of each commodity
    M      block-diagonal repetition of A, one block per commodity
    R      horizontal stack of n_commodities identity blocks; R @ X aggregates
           commodity flows into total link flows
    """

    A: sp.csr_matrix
    Gamma: sp.csr_matrix
    M: sp.csr_matrix
    R: sp.csr_matrix
    n_nodes: int
    n_links: int
    n_commodities: int

    @property
    def state_dim(self):
        # state layout: [d | X | alpha | beta]
        c, a, n = self.n_commodities, self.n_links, self.n_nodes
        return c + c * a + c * n + c * a

    @property
    def n_constraints(self):
        # residual layout: [stationarity | conservation | complementarity]
        c, a, n = self.n_commodities, self.n_links, self.n_nodes
        return 2 * c * a + c * n

    @property
    def slices(self):
        """Block slices (d, X, alpha, beta) of the flat state vector."""
        c, a, n = self.n_commodities, self.n_links, self.n_nodes
        i0, i1, i2, i3 = c, c + c * a, c + c * a + c * n, c + 2 * c * a + c * n
        return slice(0, i0), slice(i0, i1), slice(i1, i2), slice(i2, i3)

    @property
    def residual_slices(self):
        """Block slices (stationarity, conservation, complementarity)."""
        c, a, n = self.n_commodities, self.n_links, self.n_nodes
        return (
            slice(0, c * a),
            slice(c * a, c * a + c * n),
            slice(c * a + c * n, 2 * c * a + c * n),
        )


def build_structure(net):
    """Assemble the sparse structure matrices of a network.

    Deterministic: identical networks give identical matrices, entry for entry.
    """
    n, a, c = net.n_nodes, net.n_links, net.n_commodities

    rows = np.concatenate([net.tails, net.heads])
    cols = np.concatenate([np.arange(a), np.arange(a)])
    vals = np.concatenate([-np.ones(a), np.ones(a)])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, a))

    grow, gcol, gval = [], [], []
    for i in range(c):
        grow.append(i * n + net.origin_idx[i])
        gcol.append(i)
        gval.append(-1.0)
        grow.append(i * n + net.destination_idx[i])
        gcol.append(i)
        gval.append(1.0)
    Gamma = sp.csr_matrix((gval, (grow, gcol)), shape=(c * n, c))

    M = sp.block_diag([A] * c, format="csr") if c else sp.csr_matrix((0, 0))
    R = sp.hstack([sp.identity(a, format="csr")] * c, format="csr") if c else sp.csr_matrix((a, 0))

    return StructureMatrices(A=A, Gamma=Gamma, M=M, R=R,
                             n_nodes=n, n_links=a, n_commodities=c)


def aggregate_flows(S, X):
    """Total link flows v = R @ X from commodity-disaggregated flows."""
    X = np.asarray(X, dtype=float)
    if X.shape != (S.n_commodities * S.n_links,):
        raise DimensionMismatch(
            "expected disaggregated flow vector of length %d, got shape %r"
            % (S.n_commodities * S.n_links, X.shape)
        )
    return X.reshape(S.n_commodities, S.n_links).sum(axis=0)


# -- JSON input/output -------------------------------------------------------

def _require(doc, key, kind, where):
    if key not in doc:
        raise MalformedInput("missing key %r in %s" % (key, where))
    val = doc[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise MalformedInput("key %r in %s must be a number" % (key, where))
        return float(val)
    if not isinstance(val, kind):
        raise MalformedInput("key %r in %s has wrong type" % (key, where))
    return val


def parse_network(text):
    """Parse a JSON network document into a validated Network.

    Top-level keys other than nodes/links/commodities/observations/weights are
    ignored so documents can carry solver settings alongside the instance.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInput("invalid JSON: %s" % exc) from exc
    if not isinstance(doc, dict):
        raise MalformedInput("top-level JSON value must be an object")

    nodes = _require(doc, "nodes", list, "document")
    link_specs = _require(doc, "links", list, "document")
    com_specs = _require(doc, "commodities", list, "document")
    obs_specs = doc.get("observations", [])
    weights = doc.get("weights", {})
    if not isinstance(obs_specs, list):
        raise MalformedInput("'observations' must be a list")
    if not isinstance(weights, dict):
        raise MalformedInput("'weights' must be an object")

    links = []
    for spec in link_specs:
        if not isinstance(spec, dict):
            raise MalformedInput("each link must be an object")
        coeffs = _require(spec, "coeffs", list, "link")
        links.append(
            Link(
                id=_require(spec, "id", (int, str), "link"),
                tail=_require(spec, "from", (int, str), "link"),
                head=_require(spec, "to", (int, str), "link"),
                cost=CostFunction(tuple(coeffs)),
            )
        )

    commodities = []
    for spec in com_specs:
        if not isinstance(spec, dict):
            raise MalformedInput("each commodity must be an object")
        commodities.append(
            Commodity(
                origin=_require(spec, "origin", (int, str), "commodity"),
                destination=_require(spec, "destination", (int, str), "commodity"),
                target_demand=_require(spec, "target", float, "commodity"),
            )
        )

    observations = {}
    for spec in obs_specs:
        if not isinstance(spec, dict):
            raise MalformedInput("each observation must be an object")
        lid = _require(spec, "link", (int, str), "observation")
        if lid in observations:
            raise DuplicateId("duplicate observation for link %r" % (lid,))
        observations[lid] = _require(spec, "flow", float, "observation")

    eta1 = weights.get("eta1", 1.0)
    eta2 = weights.get("eta2", 1.0)
    for name, val in (("eta1", eta1), ("eta2", eta2)):
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise MalformedInput("weight %r must be a number" % (name,))

    return Network(nodes, links, commodities, observations, eta1=eta1, eta2=eta2)


def serialize_network(net):
    """Inverse of parse_network; round-trips to an equal Network."""
    doc = {
        "nodes": list(net.nodes),
        "links": [
            {"id": lk.id, "from": lk.tail, "to": lk.head, "coeffs": list(lk.cost.coeffs)}
            for lk in net.links
        ],
        "commodities": [
            {
                "origin": com.origin,
                "destination": com.destination,
                "target": com.target_demand,
            }
            for com in net.commodities
        ],
        "observations": [
            {"link": lk.id, "flow": net.observations[lk.id]}
            for lk in net.links
            if lk.id in net.observations
        ],
        "weights": {"eta1": net.eta1, "eta2": net.eta2},
    }
    return json.dumps(doc, indent=2)
