"""Tour of the two graph containers and the moves between them.

A featured hypergraph is the user-facing object; the star-expansion bipartite
graph is what every algorithm in the package actually runs on.  This script
builds a small example by hand, walks the round trip, and shows how budgets
ride along with left nodes.
"""

import numpy as np

from hyperforge.hypergraph import Hypergraph, collapse_bipartite, star_expand

rng = np.random.default_rng(0)

# Seven nodes, four hyperedges, one scalar feature per node.
h = Hypergraph(
    7,
    [(0, 1, 2), (2, 3), (3, 4, 5), (5, 6)],
    node_features=rng.normal(size=(7, 1)),
)
print("hypergraph:", h.num_nodes, "nodes,", h.num_hyperedges, "hyperedges")
for he in h.hyperedges:
    print("  edge", he)

b = star_expand(h)
print("\nstar expansion:")
print("  left nodes :", b.num_left)
print("  right nodes:", b.num_right)
print("  incidences :", b.num_edges)
print("  budgets    :", b.left_budgets.tolist())

# Every left node starts with budget 1; the budget column is how coarse
# clusters remember how many original nodes they stand for.
back = collapse_bipartite(b)
print("\nround trip exact:", back.hyperedges == h.hyperedges)
print("features intact :", np.array_equal(back.node_features, h.node_features))
