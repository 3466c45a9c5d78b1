"""Annotation passes over a compressed sketch tree.

Four passes, in dependency order:

1. centers: every node gets a representative input point, chosen bottom-up
   so the center of a node is the center of a distinguished child.  For a
   node v whose children hang on short edges the distinguished child is the
   root of the tau-tree: a BFS tree over the children graph that connects
   two children when their clusters come within 2^level(v), rooted at the
   child holding the smallest label, with neighbor lists sorted by smallest
   member label so the construction is deterministic.

2. ingresses: every node other than a part root gets a previously processed
   node whose surrogate anchors its own.  The tau-root's ingress is the
   parent; any other child v_i of v takes the closest point y of its
   tau-predecessor's cluster and descends from that predecessor toward
   leaf(y), stopping before any long edge, which always lands on a node
   with no short children.

3. precisions: inv_delta(v) = 5 + ceil(Delta(v)/2^level(v)), computed with
   a 1e-12 downward nudge so diameters that are exact multiples of the
   level scale do not round up on float dust.

4. surrogates: processing each decomposition part in an order that places
   every node after its ingress, the normalized displacement
   eta*(v) = (delta(v)/2^level(v)) * (f(c(v)) - s*(in(v))) is rounded to
   the net of granularity delta_eff (delta_eff = delta(v)*eps at nodes
   with no short children, else delta(v)), and the surrogate is rebuilt as
   s*(v) = s*(in(v)) + (2^level(v)/delta(v)) * eta(v).  Because eps and the
   levels are powers of two, every surrogate minus its part root is an
   integer multiple of eps/d^(1/p) per coordinate; those integers are
   carried exactly (arbitrary precision) so shifted surrogates and the
   landmark replay reproduce identical floats no matter how they are
   recomputed.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import net
from .core import GuaranteeError, PointSet, SketchParams, oracle_all_pairs
from .hst import ClusterIndex, SketchTree, subtree_decomposition

__all__ = [
    "TauTree",
    "Annotations",
    "SurrogateTable",
    "assign_centers",
    "assign_ingresses",
    "tau_dfs_order",
    "compute_surrogates",
    "annotate",
    "shift_to_float",
]


@dataclass
class TauTree:
    """BFS tree over the children of one node (short edges only)."""

    root: int
    parent: dict[int, int | None]
    children: dict[int, list[int]]

    def preorder(self) -> list[int]:
        out: list[int] = []
        stack = [self.root]
        while stack:
            v = stack.pop()
            out.append(v)
            stack.extend(reversed(self.children[v]))
        return out


@dataclass
class Annotations:
    """Per-node annotations; filled in stages (see module docstring)."""

    center: list[int]
    tau: dict[int, TauTree]
    ingress: list[int | None] = field(default_factory=list)
    inv_delta: list[int] = field(default_factory=list)
    is_subtree_leaf: list[bool] = field(default_factory=list)
    net_kind: str = "grid"
    eta_ints: list[np.ndarray | None] = field(default_factory=list)
    eta_rank: list[int | None] = field(default_factory=list)


@dataclass
class SurrogateTable:
    """Float surrogates plus the exact integer shifts they come from.

    ``shift_int[v]`` holds per-coordinate integers k with
    s*(v) - s*(part root of v) == k * unit exactly (as reals), where
    ``unit`` = eps/d^(1/p).  ``shift_float`` is the one sanctioned
    int->float conversion; every consumer must go through it so that
    independently recomputed surrogates agree bit for bit.
    """

    s_star: np.ndarray
    eta_star: np.ndarray
    disp: np.ndarray
    shift_int: list[tuple[int, ...]]
    unit: float

    def shift_float(self, v: int) -> np.ndarray:
        return shift_to_float(self.shift_int[v], self.unit)


def shift_to_float(ks, unit: float) -> np.ndarray:
    """Correctly rounded float of integer shifts times the fixed-point unit."""
    if all(-(2**62) < k < 2**62 for k in ks):
        arr = np.array(ks, dtype=np.int64).astype(np.float64)
    else:
        arr = np.array([float(k) for k in ks], dtype=np.float64)
    return arr * unit


# --------------------------------------------------------------------------
# Pass 1: centers and tau-trees.


def assign_centers(
    tree: SketchTree,
    clusters: ClusterIndex | None,
    ps: PointSet | None = None,
    dmat: np.ndarray | None = None,
) -> tuple[list[int], dict[int, TauTree]]:
    """Representative point per node plus the tau-tree of every node with
    short children.  Raises GuaranteeError if some children graph is
    disconnected (the build never produces one, so that means corrupt
    inputs)."""
    if dmat is None:
        dmat = oracle_all_pairs(ps)
    members = tree.leaf_labels_under()
    center = [-1] * tree.n_nodes
    tau: dict[int, TauTree] = {}
    # node ids are DFS preorder, so descending order visits children first
    for v in range(tree.n_nodes - 1, -1, -1):
        if tree.is_leaf(v):
            center[v] = tree.leaf_label[v]
        elif tree.is_long_top(v):
            center[v] = center[tree.children[v][0]]
        else:
            tt = _build_tau(tree, v, members, dmat)
            tau[v] = tt
            center[v] = center[tt.root]
    return center, tau


def _build_tau(
    tree: SketchTree, v: int, members: list[np.ndarray], dmat: np.ndarray
) -> TauTree:
    kids = tree.children[v]
    k = len(kids)
    smallest = {c: int(members[c][0]) for c in kids}
    root = min(kids, key=smallest.__getitem__)
    if k == 1:
        return TauTree(root=root, parent={root: None}, children={root: []})
    thresh = math.ldexp(1.0, tree.level[v])
    if all(members[c].size == 1 for c in kids):
        labels = np.fromiter((smallest[c] for c in kids), dtype=np.int64, count=k)
        mins = dmat[np.ix_(labels, labels)]
    else:
        mins = np.full((k, k), np.inf)
        for i in range(k):
            mi = members[kids[i]]
            for j in range(i + 1, k):
                m = float(dmat[np.ix_(mi, members[kids[j]])].min())
                mins[i, j] = mins[j, i] = m
    adj: dict[int, list[int]] = {c: [] for c in kids}
    for i in range(k):
        for j in range(i + 1, k):
            if mins[i, j] < thresh:
                adj[kids[i]].append(kids[j])
                adj[kids[j]].append(kids[i])
    for c in kids:
        adj[c].sort(key=smallest.__getitem__)
    parent: dict[int, int | None] = {root: None}
    children: dict[int, list[int]] = {c: [] for c in kids}
    queue = deque([root])
    while queue:
        cur = queue.popleft()
        for nb in adj[cur]:
            if nb not in parent:
                parent[nb] = cur
                children[cur].append(nb)
                queue.append(nb)
    if len(parent) != k:
        raise GuaranteeError(
            f"children graph of node {v} is disconnected below 2^{tree.level[v]}"
        )
    return TauTree(root=root, parent=parent, children=children)


# --------------------------------------------------------------------------
# Pass 2: ingresses.


def assign_ingresses(
    tree: SketchTree,
    center: list[int],
    tau: dict[int, TauTree],
    ps: PointSet | None = None,
    dmat: np.ndarray | None = None,
) -> list[int | None]:
    """Ingress node per non-part-root node (None at part roots)."""
    if dmat is None:
        dmat = oracle_all_pairs(ps)
    members = tree.leaf_labels_under()
    ingress: list[int | None] = [None] * tree.n_nodes
    for v, tt in tau.items():
        for c in tt.preorder():
            j = tt.parent[c]
            if j is None:
                ingress[c] = v
            else:
                y = _closest_label(dmat, members[j], members[c])
                ingress[c] = _descend_short(tree, j, y, members)
    return ingress


def _closest_label(dmat: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> int:
    """Label in ``rows`` closest to the ``cols`` cluster, ties to smallest."""
    sub = dmat[np.ix_(rows, cols)]
    return int(rows[int(np.argmin(sub.min(axis=1)))])


def _contains(sorted_labels: np.ndarray, y: int) -> bool:
    i = int(np.searchsorted(sorted_labels, y))
    return i < sorted_labels.size and int(sorted_labels[i]) == y


def _descend_short(
    tree: SketchTree, start: int, y: int, members: list[np.ndarray]
) -> int:
    """Lowest node on the path start -> leaf(y) reachable over short edges."""
    cur = start
    while not tree.is_leaf(cur):
        nxt = next(c for c in tree.children[cur] if _contains(members[c], y))
        if tree.long_edge[nxt]:
            break
        cur = nxt
    return cur


# --------------------------------------------------------------------------
# Pass 4 ordering: nodes of one part, every node after its ingress.


def tau_dfs_order(
    tree: SketchTree, tau: dict[int, TauTree], part_root: int
) -> list[int]:
    """All nodes of ``part_root``'s decomposition part, ingress-compatible.

    Each node's tau-tree is walked in preorder with every child's part
    subtree expanded in full before its tau-successor starts; since a
    non-root child's ingress lies inside its tau-predecessor's expansion,
    every node appears after its ingress.
    """
    out: list[int] = []
    stack = [part_root]
    while stack:
        u = stack.pop()
        out.append(u)
        tt = tau.get(u)
        if tt is not None:
            stack.extend(reversed(tt.preorder()))
    return out


# --------------------------------------------------------------------------
# Passes 3 + 4: precisions and quantized surrogates.


def compute_surrogates(
    tree: SketchTree,
    ann: Annotations,
    ps: PointSet,
    params: SketchParams,
    clusters: ClusterIndex,
    decomp=None,
) -> SurrogateTable:
    """Fill inv_delta / subtree-leaf flags / eta codes in ``ann`` and build
    the surrogate table.  Raises GuaranteeError when a normalized
    displacement overflows 1 + delta_eff."""
    eps = params.epsilon
    t = params.t
    p = ps.p
    d = ps.d
    n_nodes = tree.n_nodes
    coords = ps.coords
    unit = net.per_coord_scale(eps, d, p)
    if decomp is None:
        decomp = subtree_decomposition(tree)

    inv_delta = [0] * n_nodes
    for v in range(n_nodes):
        ratio = clusters.diameter[v] / math.ldexp(1.0, tree.level[v])
        inv_delta[v] = 5 + math.ceil(ratio - 1e-12)
    is_leafy = [tree.is_subtree_leaf(v) for v in range(n_nodes)]

    ranked = params.net_kind == "ranked"
    eta_ints: list[np.ndarray | None] = [None] * n_nodes
    eta_rank: list[int | None] = [None] * n_nodes
    shift_int: list[tuple[int, ...]] = [()] * n_nodes
    s_star = np.zeros((n_nodes, d), dtype=np.float64)
    eta_star = np.zeros((n_nodes, d), dtype=np.float64)
    disp = np.zeros((n_nodes, d), dtype=np.float64)

    for root in decomp.roots:
        base = coords[ann.center[root]]
        s_star[root] = base
        shift_int[root] = (0,) * d
        for v in tau_dfs_order(tree, ann.tau, root)[1:]:
            u = ann.ingress[v]
            q = inv_delta[v]
            delta_eff = net.delta_effective(eps, is_leafy[v], q)
            dv = coords[ann.center[v]] - s_star[u]
            es = dv / (q * math.ldexp(1.0, tree.level[v]))
            m = net.grid_indices(es, delta_eff, d, p)
            if ranked:
                eta_rank[v] = net.rank(m, d, delta_eff, 1.0 + delta_eff)
            eta_ints[v] = m
            sh = tree.level[v] + (0 if is_leafy[v] else t)
            prev = shift_int[u]
            shift_int[v] = tuple(
                pk + (int(mi) << sh) for pk, mi in zip(prev, m)
            )
            s_star[v] = base + shift_to_float(shift_int[v], unit)
            eta_star[v] = es
            disp[v] = dv

    ann.inv_delta = inv_delta
    ann.is_subtree_leaf = is_leafy
    ann.net_kind = params.net_kind
    ann.eta_ints = eta_ints
    ann.eta_rank = eta_rank
    return SurrogateTable(
        s_star=s_star, eta_star=eta_star, disp=disp, shift_int=shift_int, unit=unit
    )


def annotate(
    tree: SketchTree,
    clusters: ClusterIndex,
    ps: PointSet,
    params: SketchParams,
    dmat: np.ndarray | None = None,
) -> tuple[Annotations, SurrogateTable]:
    """All four passes in one call."""
    if dmat is None:
        dmat = oracle_all_pairs(ps)
    center, tau = assign_centers(tree, clusters, ps, dmat)
    ingress = assign_ingresses(tree, center, tau, ps, dmat)
    ann = Annotations(center=center, tau=tau, ingress=ingress)
    table = compute_surrogates(tree, ann, ps, params, clusters)
    return ann, table
