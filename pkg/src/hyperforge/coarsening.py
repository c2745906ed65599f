"""Budgeted coarsening of featured hypergraphs.

A coarsening sequence contracts left-node pairs (merging budgets by sum and
features by budget-weighted mean), then merges right nodes whose neighborhoods
became identical.  Candidate contractions are clique-expansion edges ranked by
a local variation cost; acceptance runs a stochastic gate, an overlap check,
and a cap of three on right-side merge groups.  Each level records the exact
expansion and refinement targets that rebuild the next-finer level, so the
whole sequence is losslessly replayable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expansion import ExpansionVectors, RefinementDecision, expand
from .hypergraph import BipartiteGraph, CliqueExpansion, Hypergraph, star_expand

__all__ = [
    "CoarseningParams",
    "CoarseningLevel",
    "CoarseningSequence",
    "CoarseningCache",
    "DedupResult",
    "clique_of_bipartite",
    "local_variation_cost",
    "merge_left",
    "dedup_right",
    "complete_left_partition",
    "sample_coarsening_sequence",
    "cache_take",
]

MAX_RIGHT_GROUP = 3


@dataclass(frozen=True)
class CoarseningParams:
    """Knobs of the level sampler.

    ``gate_lambda`` is the stochastic acceptance gate: a candidate passes when
    a uniform draw exceeds it.  Graphs below ``small_graph_cutoff`` left nodes
    always use ``rho_max`` as their per-level reduction fraction.
    """

    rho_min: float = 0.1
    rho_max: float = 0.3
    gate_lambda: float = 0.3
    preserve_k: int = 8
    small_graph_cutoff: int = 16

    def __post_init__(self):
        if not 0.0 < self.rho_min <= self.rho_max < 1.0:
            raise ValueError("need 0 < rho_min <= rho_max < 1")
        if not 0.0 <= self.gate_lambda <= 1.0:
            raise ValueError("gate_lambda must lie in [0, 1]")
        if self.preserve_k < 1:
            raise ValueError("preserve_k must be >= 1")


@dataclass(frozen=True)
class CoarseningLevel:
    """One level plus the stored targets that rebuild the next-finer level.

    The finest level carries no targets.  ``expansion`` holds per-node child
    counts; ``refinement`` holds the edge-keep mask over the canonical
    expanded-edge order, per-child budget fractions, and the finer feature
    matrices.
    """

    bipartite: BipartiteGraph
    expansion: ExpansionVectors | None = None
    refinement: RefinementDecision | None = None


@dataclass(frozen=True)
class CoarseningSequence:
    """Fine-to-coarse list of levels; levels[0] is the (relabeled) input."""

    levels: tuple[CoarseningLevel, ...]

    def __post_init__(self):
        if not self.levels:
            raise ValueError("empty sequence")
        last = self.levels[-1].bipartite
        if last.num_left != 1 or last.num_right != 1:
            raise ValueError("terminal level must be a single node and hyperedge")
        counts = [lvl.bipartite.num_left for lvl in self.levels]
        if any(b <= a for a, b in zip(counts[1:], counts[:-1])):
            raise ValueError("left node counts must strictly decrease")
        if self.levels[0].expansion is not None:
            raise ValueError("finest level carries no targets")
        for lvl in self.levels[1:]:
            if lvl.expansion is None or lvl.refinement is None:
                raise ValueError("every non-finest level needs stored targets")

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def __len__(self) -> int:
        return len(self.levels)


def clique_of_bipartite(b: BipartiteGraph) -> CliqueExpansion:
    """Weighted clique expansion of the current level: left nodes are adjacent
    iff they share a right node; the weight counts shared right nodes."""
    counts: dict[tuple[int, int], int] = {}
    for nb in b.right_neighborhoods():
        members = sorted(nb)
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                key = (members[i], members[j])
                counts[key] = counts.get(key, 0) + 1
    if counts:
        pairs = np.array(sorted(counts), dtype=np.int64)
        weights = np.array([counts[tuple(p)] for p in pairs], dtype=np.int64)
    else:
        pairs = np.zeros((0, 2), dtype=np.int64)
        weights = np.zeros(0, dtype=np.int64)
    return CliqueExpansion(b.num_left, pairs, weights)


def _variation_basis(clique: CliqueExpansion, preserve_k: int) -> tuple[np.ndarray, np.ndarray]:
    """First-k spectral basis A = U_k diag(lambda^-1/2) of the combinatorial
    Laplacian, zero-eigenvalue columns masked, plus weighted degrees."""
    W = clique.adjacency()
    deg = W.sum(axis=1)
    L = np.diag(deg) - W
    vals, vecs = np.linalg.eigh(L)
    k = min(preserve_k, clique.num_nodes)
    coef = np.zeros(k)
    positive = vals[:k] > 1e-8
    coef[positive] = vals[:k][positive] ** -0.5
    return vecs[:, :k] * coef, deg


def _variation_costs(clique: CliqueExpansion, preserve_k: int) -> np.ndarray:
    """Local variation cost of every clique edge (vectorized closed form).

    For a pair contraction the cost matrix B^T L_local B is a rank-one outer
    product, so its Frobenius norm collapses to
    (deg_u + deg_v) / 2 * ||A_u - A_v||^2.
    """
    if clique.num_edges == 0:
        return np.zeros(0)
    A, deg = _variation_basis(clique, preserve_k)
    u, v = clique.edges[:, 0], clique.edges[:, 1]
    diff = A[u] - A[v]
    return 0.5 * (deg[u] + deg[v]) * np.einsum("ij,ij->i", diff, diff)


def local_variation_cost(
    c: CliqueExpansion, contraction: tuple[int, int], preserve_k: int = 8
) -> float:
    """Spectral disturbance score of contracting one adjacent node pair.

    Deterministic and non-negative; built from the first ``preserve_k``
    Laplacian eigenpairs.

    Raises:
        ValueError: if the pair is not an edge of the clique expansion.
    """
    u, v = int(contraction[0]), int(contraction[1])
    if u > v:
        u, v = v, u
    if u == v:
        raise ValueError("contraction pair must be two distinct nodes")
    if not c.has_edge(u, v):
        raise ValueError(f"nodes {u} and {v} are not adjacent in the clique expansion")
    A, deg = _variation_basis(c, preserve_k)
    W = c.adjacency()
    w = W[u, v]
    local = np.array(
        [[2 * deg[u] - w, -w], [-w, 2 * deg[v] - w]]
    )
    pi_orth = np.array([[0.5, -0.5], [-0.5, 0.5]])
    B = pi_orth @ A[[u, v], :]
    return float(np.linalg.norm(B.T @ local @ B))


def complete_left_partition(parts: Sequence[Sequence[int]], num_left: int) -> list[tuple[int, ...]]:
    """Extend disjoint parts with singletons and sort groups by least member."""
    seen: set[int] = set()
    groups: list[tuple[int, ...]] = []
    for part in parts:
        members = tuple(sorted(int(x) for x in part))
        if not members:
            raise ValueError("empty part")
        if members[0] < 0 or members[-1] >= num_left:
            raise ValueError("part member out of range")
        if seen.intersection(members):
            raise ValueError("parts must be disjoint")
        seen.update(members)
        groups.append(members)
    groups.extend((i,) for i in range(num_left) if i not in seen)
    groups.sort(key=lambda g: g[0])
    return groups


def _left_neighbor_sets(b: BipartiteGraph) -> list[set[int]]:
    sets: list[set[int]] = [set() for _ in range(b.num_left)]
    for l, r in b.edges:
        sets[l].add(int(r))
    return sets


def _part_connected(part: tuple[int, ...], left_nbhd: list[set[int]]) -> bool:
    if len(part) == 1:
        return True
    remaining = set(part[1:])
    frontier = {part[0]}
    reach_right = set(left_nbhd[part[0]])
    while remaining and frontier:
        frontier = {x for x in remaining if left_nbhd[x] & reach_right}
        for x in frontier:
            reach_right |= left_nbhd[x]
        remaining -= frontier
    return not remaining


def merge_left(
    b: BipartiteGraph, parts: Sequence[Sequence[int]], allow_disconnected: bool = False
) -> BipartiteGraph:
    """Merge left-node groups: budgets add, features average budget-weighted.

    Unlisted nodes stay as singletons; merged node order is by least original
    member.  Each part must induce a connected piece of the clique expansion
    unless ``allow_disconnected`` (the sampler's last-resort bridge for
    disconnected inputs).
    """
    groups = complete_left_partition(parts, b.num_left)
    if not allow_disconnected:
        left_nbhd = _left_neighbor_sets(b)
        for g in groups:
            if not _part_connected(g, left_nbhd):
                raise ValueError(f"part {g} is not connected in the clique expansion")

    assign = np.empty(b.num_left, dtype=np.int64)
    for new_idx, g in enumerate(groups):
        for member in g:
            assign[member] = new_idx

    budgets = np.zeros(len(groups), dtype=np.int64)
    np.add.at(budgets, assign, b.left_budgets)
    features = None
    if b.left_features is not None:
        weighted = np.zeros((len(groups), b.left_features.shape[1]))
        np.add.at(weighted, assign, b.left_features * b.left_budgets[:, None])
        features = weighted / budgets[:, None]

    if b.num_edges:
        mapped = np.stack([assign[b.edges[:, 0]], b.edges[:, 1]], axis=1)
        mapped = np.unique(mapped, axis=0)
    else:
        mapped = np.zeros((0, 2), dtype=np.int64)
    return BipartiteGraph(
        num_left=len(groups),
        num_right=b.num_right,
        edges=mapped,
        left_budgets=budgets,
        left_features=features,
        right_features=b.right_features,
    )


@dataclass(frozen=True)
class DedupResult:
    """Output of :func:`dedup_right`: merged graph, merge groups in the new
    right order, and the summed right budgets (coarsening-internal)."""

    graph: BipartiteGraph
    groups: tuple[tuple[int, ...], ...]
    right_budgets: np.ndarray


def dedup_right(b: BipartiteGraph, right_budgets=None) -> DedupResult:
    """Merge right nodes with identical left neighborhoods.

    Features merge by budget-weighted mean; right budgets are tracked only
    inside coarsening (they are not a BipartiteGraph field) so they travel
    through this function explicitly.
    """
    if right_budgets is None:
        rb = np.ones(b.num_right, dtype=np.int64)
    else:
        rb = np.asarray(right_budgets, dtype=np.int64).reshape(-1)
        if rb.shape[0] != b.num_right:
            raise ValueError("right budget length mismatch")

    by_nbhd: dict[frozenset[int], list[int]] = {}
    for r, nb in enumerate(b.right_neighborhoods()):
        by_nbhd.setdefault(nb, []).append(r)
    groups = sorted((tuple(sorted(g)) for g in by_nbhd.values()), key=lambda g: g[0])

    new_rb = np.array([sum(int(rb[r]) for r in g) for g in groups], dtype=np.int64)
    features = None
    if b.right_features is not None:
        features = np.stack(
            [
                (b.right_features[list(g)] * rb[list(g), None]).sum(axis=0) / new_rb[i]
                for i, g in enumerate(groups)
            ]
        )
    edges = []
    nbhds = b.right_neighborhoods()
    for new_idx, g in enumerate(groups):
        for l in sorted(nbhds[g[0]]):
            edges.append((l, new_idx))
    graph = BipartiteGraph(
        num_left=b.num_left,
        num_right=len(groups),
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        left_budgets=b.left_budgets,
        left_features=b.left_features,
        right_features=features,
    )
    return DedupResult(graph=graph, groups=tuple(groups), right_budgets=new_rb)


def _right_groups_ok(nbhds: list[list[int]], assign: np.ndarray, extra: tuple[int, int]) -> bool:
    """Would contracting ``extra`` on top of ``assign`` keep every group of
    identical right neighborhoods at size <= 3?"""
    u, v = extra
    counts: dict[frozenset[int], int] = {}
    for nb in nbhds:
        key = frozenset(u if assign[x] == v else int(assign[x]) for x in nb)
        c = counts.get(key, 0) + 1
        if c > MAX_RIGHT_GROUP:
            return False
        counts[key] = c
    return True


def _sample_level_contractions(
    b: BipartiteGraph, params: CoarseningParams, rng: np.random.Generator
) -> tuple[list[tuple[int, int]], bool]:
    """One level's accepted contraction pairs; the flag marks a disconnected
    bridge merge (no clique edge existed at all)."""
    n_prev = b.num_left
    if n_prev < params.small_graph_cutoff:
        red_frac = params.rho_max
    else:
        red_frac = rng.uniform(params.rho_min, params.rho_max)

    clique = clique_of_bipartite(b)
    costs = _variation_costs(clique, params.preserve_k)
    if clique.num_edges:
        order = np.lexsort((clique.edges[:, 1], clique.edges[:, 0], costs))
        candidates = [tuple(int(x) for x in clique.edges[i]) for i in order]
    else:
        candidates = []

    nbhds = [sorted(nb) for nb in b.right_neighborhoods()]
    assign = np.arange(n_prev, dtype=np.int64)
    used: set[int] = set()
    accepted: list[tuple[int, int]] = []

    for u, v in candidates:
        if rng.random() > params.gate_lambda:
            if u not in used and v not in used:
                if _right_groups_ok(nbhds, assign, (u, v)):
                    accepted.append((u, v))
                    used.update((u, v))
                    assign[v] = u
        if len(accepted) > red_frac * n_prev:
            break

    if accepted:
        return accepted, False

    # Forced progress: every candidate was rejected (or none existed).  Take
    # the single cheapest contraction that satisfies the group cap; with no
    # clique edge at all, bridge the lowest-index pair across components.
    for u, v in candidates:
        if _right_groups_ok(nbhds, assign, (u, v)):
            return [(u, v)], False
    if candidates:
        raise ValueError(
            "no legal contraction at this level: every candidate would merge "
            "more than three right nodes at once"
        )
    if n_prev < 2:
        raise ValueError("cannot contract a single node")
    if not _right_groups_ok(nbhds, assign, (0, 1)):
        raise ValueError("bridge contraction would merge more than three right nodes")
    return [(0, 1)], True


def _permute_bipartite(
    b: BipartiteGraph, lperm: np.ndarray, rperm: np.ndarray
) -> BipartiteGraph:
    """Relabel so that new node i is old node perm[i] on each side."""
    linv = np.empty(b.num_left, dtype=np.int64)
    linv[lperm] = np.arange(b.num_left)
    rinv = np.empty(b.num_right, dtype=np.int64)
    rinv[rperm] = np.arange(b.num_right)
    edges = (
        np.stack([linv[b.edges[:, 0]], rinv[b.edges[:, 1]]], axis=1)
        if b.num_edges
        else b.edges
    )
    return BipartiteGraph(
        num_left=b.num_left,
        num_right=b.num_right,
        edges=edges,
        left_budgets=b.left_budgets[lperm],
        left_features=None if b.left_features is None else b.left_features[lperm],
        right_features=None if b.right_features is None else b.right_features[rperm],
    )


def _zero_features(b: BipartiteGraph) -> BipartiteGraph:
    if b.left_features is None and b.right_features is None:
        return b
    return BipartiteGraph(
        num_left=b.num_left,
        num_right=b.num_right,
        edges=b.edges,
        left_budgets=b.left_budgets,
        left_features=None if b.left_features is None else np.zeros_like(b.left_features),
        right_features=None if b.right_features is None else np.zeros_like(b.right_features),
    )


def sample_coarsening_sequence(
    h: Hypergraph, params: CoarseningParams, rng: np.random.Generator
) -> CoarseningSequence:
    """Sample a full multi-scale sequence down to one node and one hyperedge.

    Levels are stored so that every coarse level's expansion enumerates the
    next-finer level's nodes as consecutive ascending blocks; replaying the
    stored targets therefore rebuilds each finer level exactly.  The terminal
    level's features are zeroed (whenever at least one reduction happened).

    Raises:
        ValueError: if the input has no hyperedges, or carries more than three
            copies of one hyperedge (no legal right-side merge exists then).
    """
    if h.num_hyperedges < 1:
        raise ValueError("cannot coarsen a hypergraph with no hyperedges")

    b0 = star_expand(h)
    dup_counts: dict[frozenset[int], int] = {}
    for nb in b0.right_neighborhoods():
        dup_counts[nb] = dup_counts.get(nb, 0) + 1
        if dup_counts[nb] > MAX_RIGHT_GROUP:
            raise ValueError("more than three duplicate copies of one hyperedge")

    raw: list[BipartiteGraph] = [b0]
    left_groups_per_step: list[list[tuple[int, ...]]] = [[]]
    right_groups_per_step: list[list[tuple[int, ...]]] = [[]]
    right_budgets = np.ones(b0.num_right, dtype=np.int64)

    while raw[-1].num_left > 1:
        cur = raw[-1]
        pairs, bridged = _sample_level_contractions(cur, params, rng)
        merged = merge_left(cur, pairs, allow_disconnected=bridged)
        left_groups = complete_left_partition(pairs, cur.num_left)
        dedup = dedup_right(merged, right_budgets)
        if any(len(g) > MAX_RIGHT_GROUP for g in dedup.groups):
            raise ValueError("right merge group exceeded the cap of three")  # unreachable
        raw.append(dedup.graph)
        left_groups_per_step.append(left_groups)
        right_groups_per_step.append([tuple(g) for g in dedup.groups])
        right_budgets = dedup.right_budgets

    top = len(raw) - 1
    if top >= 1:
        raw[top] = _zero_features(raw[top])

    # Top-down pass: fix each level's node order to the expansion order of its
    # parent, then record exact targets against the re-indexed finer level.
    lperm = np.arange(raw[top].num_left)
    rperm = np.arange(raw[top].num_right)
    stored: list[BipartiteGraph | None] = [None] * (top + 1)
    stored[top] = _permute_bipartite(raw[top], lperm, rperm)
    targets: list[tuple[ExpansionVectors, RefinementDecision] | None] = [None] * (top + 1)

    for t in range(top, 0, -1):
        gl = [tuple(sorted(left_groups_per_step[t][old])) for old in lperm]
        gr = [tuple(sorted(right_groups_per_step[t][old])) for old in rperm]
        child_lperm = np.array([i for g in gl for i in g], dtype=np.int64)
        child_rperm = np.array([i for g in gr for i in g], dtype=np.int64)
        fine = _permute_bipartite(raw[t - 1], child_lperm, child_rperm)
        stored[t - 1] = fine

        ev = ExpansionVectors([len(g) for g in gl], [len(g) for g in gr])
        expanded = expand(stored[t], ev)
        fine_edges = {(int(l), int(r)) for l, r in fine.edges}
        keep = np.array(
            [1 if (int(l), int(r)) in fine_edges else 0 for l, r in expanded.edges],
            dtype=np.int8,
        )
        if int(keep.sum()) != fine.num_edges:
            raise AssertionError("finer edges escaped the expansion closure")
        fractions = fine.left_budgets / expanded.left_budgets
        targets[t] = (
            ev,
            RefinementDecision(
                edge_keep=keep,
                budget_split=fractions,
                left_features=fine.left_features,
                right_features=fine.right_features,
            ),
        )
        lperm, rperm = child_lperm, child_rperm

    levels = [CoarseningLevel(bipartite=stored[0])]
    for t in range(1, top + 1):
        ev, rd = targets[t]
        levels.append(CoarseningLevel(bipartite=stored[t], expansion=ev, refinement=rd))
    return CoarseningSequence(levels=tuple(levels))


@dataclass
class CacheItem:
    """One training draw: a sequence plus the sampled level index."""

    sequence: CoarseningSequence
    level_index: int

    @property
    def level(self) -> CoarseningLevel:
        return self.sequence.levels[self.level_index]


@dataclass
class CoarseningCache:
    """Per-graph queues of not-yet-consumed levels.

    Each take returns a uniformly random unconsumed level of the graph's
    current sequence; once every level was consumed a fresh sequence is
    sampled with new RNG draws.
    """

    graphs: Sequence[Hypergraph]
    params: CoarseningParams
    _state: dict[int, tuple[CoarseningSequence, list[int]]] = field(default_factory=dict)

    def take(self, graph_id: int, rng: np.random.Generator) -> CacheItem:
        if not 0 <= graph_id < len(self.graphs):
            raise ValueError(f"unknown graph id {graph_id}")
        entry = self._state.get(graph_id)
        if entry is None or not entry[1]:
            seq = sample_coarsening_sequence(self.graphs[graph_id], self.params, rng)
            entry = (seq, list(range(seq.num_levels)))
            self._state[graph_id] = entry
        seq, pending = entry
        level_index = pending.pop(int(rng.integers(len(pending))))
        return CacheItem(sequence=seq, level_index=level_index)


def cache_take(cache: CoarseningCache, graph_id: int, rng: np.random.Generator) -> CacheItem:
    """Functional alias for :meth:`CoarseningCache.take`."""
    return cache.take(graph_id, rng)
