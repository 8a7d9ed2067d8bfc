"""Anchor-outward hop labeling shared by the local and global featurizers.

Every anchor node runs its own breadth-first search to depth ``J`` and adds
itself to the hop-``j`` anchor counts of the nodes it reaches at exactly ``j``
hops. All searches advance together as rows of a dense frontier matrix, so
the work is ``O(#anchor nodes x #nodes)`` rather than one search per node.
"""
import numpy as np
import scipy.sparse as sp


def anchor_hop_counts(adjacency: sp.csr_matrix, anchor_nodes, anchor_dims, n_dims: int, J: int,
                      block: int = 32) -> np.ndarray:
    """Count anchors at each exact hop distance.

    Parameters
    ----------
    adjacency : symmetric 0/1 ``(n, n)`` matrix.
    anchor_nodes, anchor_dims : parallel arrays; node ``anchor_nodes[i]``
        realizes anchor ``anchor_dims[i]``. A node may realize several anchors.
    n_dims : width of the anchor vocabulary.
    J : maximum hop.
    block : number of anchor nodes searched together.

    Returns
    -------
    int64 array of shape ``(n, J + 1, n_dims)``.
    """
    if J < 0:
        raise ValueError("J must be >= 0")
    n = adjacency.shape[0]
    counts = np.zeros((n, J + 1, n_dims), dtype=np.int64)
    anchor_nodes = np.asarray(anchor_nodes, dtype=np.int64)
    anchor_dims = np.asarray(anchor_dims, dtype=np.int64)
    if not len(anchor_nodes) or n == 0:
        return counts

    sources, which = np.unique(anchor_nodes, return_inverse=True)
    # realized[s, d] = 1 when source s realizes anchor d
    realized = np.zeros((len(sources), n_dims), dtype=np.float64)
    np.add.at(realized, (which, anchor_dims), 1.0)
    adj_t = adjacency.T
    # sources advance in fixed-size blocks so memory and cost stay linear in the anchor count
    for lo in range(0, len(sources), block):
        _accumulate(adj_t, sources[lo:lo + block], realized[lo:lo + block], counts, J)
    return counts


def _accumulate(adj_t, sources, realized, counts, J):
    n, s = adj_t.shape[0], len(sources)
    frontier = np.zeros((n, s), dtype=bool)
    frontier[sources, np.arange(s)] = True
    visited = frontier.copy()
    for j in range(J + 1):
        if j:
            frontier = (adj_t @ frontier.astype(np.float64)) > 0
            frontier &= ~visited
            visited |= frontier
        if not frontier.any():
            break
        counts[:, j, :] += np.rint(frontier.astype(np.float64) @ realized).astype(np.int64)
