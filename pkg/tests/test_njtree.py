import numpy as np
import pytest

from seqswarm.njtree import (AsymmetricMatrix, NegativeDistance, TreeNode,
                             leaf_distances, newick, nj_tree, splits)


def random_tree_matrix(rng, n_taxa):
    """Generate a random binary tree with positive branch lengths and return
    (additive distance matrix, its non-trivial splits)."""
    nodes = [TreeNode(name=f"t{i}") for i in range(n_taxa)]
    members = {id(node): {node.name} for node in nodes}
    pool = nodes[:]
    while len(pool) > 2:
        i, j = sorted(rng.choice(len(pool), size=2, replace=False))
        a, b = pool[i], pool[j]
        a.length = float(rng.uniform(0.1, 2.0))
        b.length = float(rng.uniform(0.1, 2.0))
        parent = TreeNode(children=[a, b])
        members[id(parent)] = members[id(a)] | members[id(b)]
        pool = [p for k, p in enumerate(pool) if k not in (i, j)] + [parent]
    a, b = pool
    a.length = float(rng.uniform(0.1, 2.0))
    b.length = float(rng.uniform(0.1, 2.0))
    root = TreeNode(children=[a, b])

    dist_map = leaf_distances(root)
    names = [f"t{i}" for i in range(n_taxa)]
    d = np.zeros((n_taxa, n_taxa))
    for i in range(n_taxa):
        for j in range(i + 1, n_taxa):
            key = tuple(sorted((names[i], names[j])))
            d[i, j] = d[j, i] = dist_map[key]
    return d, splits(root)


def test_two_taxa_split_evenly():
    tree = nj_tree([[0.0, 4.0], [4.0, 0.0]], names=["a", "b"])
    leaves = {leaf.name: leaf.length for leaf in tree.leaves()}
    # root carries taxon a; both pendant edges are 2
    total = leaf_distances(tree)[("a", "b")]
    assert total == pytest.approx(4.0)
    assert sorted(l.length for l in tree.children) == [2.0, 2.0]


def test_known_four_taxon_tree():
    # additive matrix of ((A:1,B:2):1,(C:3,D:4))
    d = np.array([[0, 3, 5, 6],
                  [3, 0, 6, 7],
                  [5, 6, 0, 7],
                  [6, 7, 7, 0]], dtype=float)
    tree = nj_tree(d, names=list("ABCD"))
    assert splits(tree) == {frozenset({"C", "D"})}
    got = leaf_distances(tree)
    for (x, y), expected in {("A", "B"): 3, ("A", "C"): 5, ("A", "D"): 6,
                             ("B", "C"): 6, ("B", "D"): 7, ("C", "D"): 7}.items():
        assert got[(x, y)] == pytest.approx(expected, abs=1e-9)


def test_additive_recovery_random_trees(rng):
    for _ in range(25):
        n_taxa = int(rng.integers(4, 13))
        d, true_splits = random_tree_matrix(rng, n_taxa)
        tree = nj_tree(d)
        assert splits(tree) == true_splits
        got = leaf_distances(tree)
        names = [f"t{i}" for i in range(n_taxa)]
        for i in range(n_taxa):
            for j in range(i + 1, n_taxa):
                key = tuple(sorted((names[i], names[j])))
                assert got[key] == pytest.approx(d[i, j], abs=1e-9)


def test_rooted_at_first_taxon():
    d = np.array([[0, 3, 5, 6],
                  [3, 0, 6, 7],
                  [5, 6, 0, 7],
                  [6, 7, 7, 0]], dtype=float)
    tree = nj_tree(d, names=list("ABCD"))
    assert tree.children[0].name == "A"
    assert newick(tree).startswith("(A:")
    assert newick(tree).endswith(";")


def test_asymmetric_rejected():
    d = [[0.0, 1.0], [2.0, 0.0]]
    with pytest.raises(AsymmetricMatrix):
        nj_tree(d)


def test_negative_rejected():
    d = [[0.0, -1.0], [-1.0, 0.0]]
    with pytest.raises(NegativeDistance):
        nj_tree(d)


def test_nonzero_diagonal_rejected():
    d = [[1.0, 2.0], [2.0, 0.0]]
    with pytest.raises(ValueError):
        nj_tree(d)


def test_deterministic_on_ties():
    d = np.ones((5, 5)) - np.eye(5)
    assert newick(nj_tree(d)) == newick(nj_tree(d))
