"""Small graph helpers on dense adjacency patterns."""
from collections import deque

import numpy as np


def connected_components(adjacency):
    """Components of the undirected graph with an edge where adjacency is nonzero.

    Iterative breadth-first search. Components come out sorted by their
    smallest member and each component is a sorted tuple.
    """
    adj = np.asarray(adjacency) != 0
    adj = adj | adj.T
    n = adj.shape[0]
    neighbours = [np.flatnonzero(adj[i]) for i in range(n)]
    label = np.full(n, -1, dtype=int)
    comps = []
    for start in range(n):
        if label[start] >= 0:
            continue
        k = len(comps)
        label[start] = k
        queue = deque([start])
        members = []
        while queue:
            i = queue.popleft()
            members.append(i)
            for j in neighbours[i]:
                if label[j] < 0:
                    label[j] = k
                    queue.append(j)
        comps.append(tuple(sorted(members)))
    return comps, label


def is_connected(adjacency):
    comps, _ = connected_components(adjacency)
    return len(comps) <= 1
