"""Neighbor-joining tree construction from a distance matrix.

Standard NJ: repeatedly join the pair minimizing the Q criterion, assign
limb lengths from net divergences, and contract the pair into a new node.
NJ is consistent on additive matrices, so a matrix generated from a tree
with positive branch lengths is recovered exactly (topology and path
lengths). The unrooted result is re-rooted at taxon 0 for output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class AsymmetricMatrix(ValueError):
    pass


class NegativeDistance(ValueError):
    pass


@dataclass
class TreeNode:
    """Rooted tree node; `length` is the branch to the parent (0.0 at the root)."""

    name: str | None = None
    length: float = 0.0
    children: list["TreeNode"] = field(default_factory=list, repr=False)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def leaves(self) -> list["TreeNode"]:
        out = []
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend(reversed(node.children))
        return out


def _validate(d: np.ndarray) -> None:
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"distance matrix must be square, got {d.shape}")
    if d.shape[0] < 2:
        raise ValueError("need at least 2 taxa")
    if not np.allclose(d, d.T, rtol=0.0, atol=1e-9):
        raise AsymmetricMatrix("distance matrix is not symmetric")
    if np.any(d < 0):
        raise NegativeDistance("distance matrix has negative entries")
    if np.any(np.abs(np.diag(d)) > 1e-12):
        raise ValueError("distance matrix diagonal must be zero")


def nj_tree(dist, names: list[str] | None = None) -> TreeNode:
    """Build the NJ tree and root it at taxon 0.

    `names` default to t0..t{n-1}. Ties in the Q criterion break on the
    first (row-major) minimum, so the construction is deterministic.
    """
    d = np.array(dist, dtype=float)
    _validate(d)
    n = d.shape[0]
    if names is None:
        names = [f"t{i}" for i in range(n)]
    if len(names) != n:
        raise ValueError("names length does not match matrix size")

    nodes: list[TreeNode] = [TreeNode(name=name) for name in names]

    if n == 2:
        half = d[0, 1] / 2.0
        nodes[0].length = half
        nodes[1].length = half
        root = TreeNode(children=nodes)
        return _root_at_first_leaf(root, names[0])

    while len(nodes) > 3:
        m = len(nodes)
        r = d.sum(axis=0)
        q = (m - 2) * d - r[:, None] - r[None, :]
        np.fill_diagonal(q, np.inf)
        i, j = np.unravel_index(int(np.argmin(q)), q.shape)
        if i > j:
            i, j = j, i

        limb_i = d[i, j] / 2.0 + (r[i] - r[j]) / (2.0 * (m - 2))
        limb_j = d[i, j] - limb_i
        nodes[i].length = limb_i
        nodes[j].length = limb_j
        joined = TreeNode(children=[nodes[i], nodes[j]])

        new_row = (d[i] + d[j] - d[i, j]) / 2.0
        d[i, :] = new_row
        d[:, i] = new_row
        d[i, i] = 0.0
        nodes[i] = joined

        keep = [t for t in range(m) if t != j]
        d = d[np.ix_(keep, keep)]
        nodes.pop(j)

    # join the final three around a central node
    a, b, c = nodes
    da, db, dc = d[0, 1], d[0, 2], d[1, 2]
    a.length = (da + db - dc) / 2.0
    b.length = (da + dc - db) / 2.0
    c.length = (db + dc - da) / 2.0
    center = TreeNode(children=[a, b, c])
    return _root_at_first_leaf(center, names[0])


def _root_at_first_leaf(center: TreeNode, leaf_name: str) -> TreeNode:
    """Re-root at the node carrying the named leaf, keeping the leaf itself
    (with its full pendant edge) as the first child. Path lengths between
    leaves are unchanged by re-rooting."""
    path = _find_path(center, leaf_name)
    if path is None:
        raise ValueError(f"taxon {leaf_name!r} not found")
    leaf, spine = path[-1], path[:-1]
    # flip every edge along center -> ... -> parent(leaf)
    for parent, child in zip(spine, spine[1:]):
        parent.children.remove(child)
    for parent, child in zip(spine, spine[1:]):
        child.children.append(parent)
        parent.length = child.length
    new_root = spine[-1]
    new_root.length = 0.0
    new_root.children.remove(leaf)
    new_root.children.insert(0, leaf)
    return new_root


def _postorder(root: TreeNode):
    """Iterative post-order traversal; NJ trees can be deep chains, so no recursion."""
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            yield node
        else:
            stack.append((node, True))
            for child in node.children:
                stack.append((child, False))


def _find_path(root: TreeNode, leaf_name: str) -> list[TreeNode] | None:
    parents: dict[int, TreeNode | None] = {id(root): None}
    stack = [root]
    target = None
    while stack:
        node = stack.pop()
        if node.is_leaf and node.name == leaf_name:
            target = node
            break
        for child in node.children:
            parents[id(child)] = node
            stack.append(child)
    if target is None:
        return None
    path = []
    while target is not None:
        path.append(target)
        target = parents[id(target)]
    path.reverse()
    return path


def newick(root: TreeNode) -> str:
    rendered: dict[int, str] = {}
    for node in _postorder(root):
        if node.is_leaf:
            rendered[id(node)] = f"{node.name}:{node.length:.10g}"
        else:
            inner = ",".join(rendered[id(c)] for c in node.children)
            rendered[id(node)] = f"({inner}){node.name or ''}:{node.length:.10g}"
    if root.is_leaf:
        return f"{root.name};"
    inner = ",".join(rendered[id(c)] for c in root.children)
    return f"({inner}){root.name or ''};"


def leaf_distances(root: TreeNode) -> dict[tuple[str, str], float]:
    """All leaf-to-leaf path lengths; used to check additive recovery."""
    result: dict[tuple[str, str], float] = {}
    groups_of: dict[int, list[tuple[str, float]]] = {}
    for node in _postorder(root):
        if node.is_leaf:
            groups_of[id(node)] = [(node.name, 0.0)]
            continue
        groups = [
            [(name, dist + child.length) for name, dist in groups_of.pop(id(child))]
            for child in node.children
        ]
        for gi in range(len(groups)):
            for gj in range(gi + 1, len(groups)):
                for name_a, da in groups[gi]:
                    for name_b, db in groups[gj]:
                        key = (name_a, name_b) if name_a < name_b else (name_b, name_a)
                        result[key] = da + db
        groups_of[id(node)] = [pair for group in groups for pair in group]
    return result


def splits(root: TreeNode) -> set[frozenset[str]]:
    """Non-trivial bipartitions of the unrooted topology.

    Each split is stored as the side not containing the lexicographically
    smallest leaf, so representations from differently rooted trees compare
    equal."""
    below_of: dict[int, frozenset[str]] = {}
    order = list(_postorder(root))
    for node in order:
        if node.is_leaf:
            below_of[id(node)] = frozenset([node.name])
        else:
            below_of[id(node)] = frozenset().union(
                *(below_of[id(c)] for c in node.children))
    all_leaves = below_of[id(root)]
    anchor = min(all_leaves)
    found: set[frozenset[str]] = set()
    for node in order:
        if node is root:
            continue
        below = below_of[id(node)]
        if 1 < len(below) < len(all_leaves) - 1:
            found.add(all_leaves - below if anchor in below else below)
    return found
