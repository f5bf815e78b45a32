"""Pre-order traversal mechanics against brute-force tree oracles."""

import numpy as np
import pytest

from symopt import (
    IncompleteTraversalError,
    UnknownTokenError,
    is_complete,
    make_library,
    parent_sibling,
    random_complete,
    render_infix,
    to_traversal,
    to_tree,
)
from symopt.traversal import dangling_after, is_valid_prefix, subtree_span

from conftest import ids_of


# --- independent oracle: recursive-descent partial parse ------------------

def _parse(prefix, lib, pos=0):
    """Parse one subtree; returns (node, next_pos). node is None on a hole."""
    if pos >= len(prefix):
        return None, pos
    tid = prefix[pos]
    pos += 1
    children = []
    for _ in range(int(lib.arities[tid])):
        child, pos = _parse(prefix, lib, pos)
        children.append(child)
    return (tid, children), pos


def _subtree_complete(node):
    if node is None:
        return False
    _, children = node
    return all(_subtree_complete(c) for c in children)


def _oracle_parent_sibling(prefix, lib):
    """Parent and left-sibling of the first hole, by explicit tree walk."""
    tree, _ = _parse(prefix, lib, 0)
    if tree is None:
        return None, None

    def walk(node):
        tid, children = node
        for i, child in enumerate(children):
            if child is None:
                sibling = children[0][0] if i == 1 and _subtree_complete(children[0]) else None
                return tid, sibling
            if not _subtree_complete(child):
                return walk(child)
        return None

    slot = walk(tree)
    assert slot is not None, "oracle called on a complete traversal"
    return slot


# --- completeness ----------------------------------------------------------

def test_empty_prefix_is_not_complete(basic_lib):
    assert not is_complete((), basic_lib)
    assert dangling_after((), basic_lib) == 1


def test_minimal_binary_expression_is_complete(basic_lib):
    assert is_complete(ids_of(basic_lib, "add", "x1", "x1"), basic_lib)


def test_figure_example_is_complete(fig_lib):
    # sin(c * x1) / log(x2) in pre-order
    ids = ids_of(fig_lib, "div", "sin", "mul", "const", "x1", "log", "x2")
    assert is_complete(ids, fig_lib)


def test_unknown_token_id_raises(basic_lib):
    with pytest.raises(UnknownTokenError):
        is_complete((0, 99), basic_lib)


def test_arity_sum_identity_on_complete_traversals(basic_lib, rng):
    # every accepted traversal satisfies sum(arity) == n - 1
    for _ in range(500):
        ids = random_complete(basic_lib, rng, max_len=25)
        assert is_complete(ids, basic_lib)
        assert sum(int(basic_lib.arities[t]) for t in ids) == len(ids) - 1


def test_proper_prefixes_are_incomplete(basic_lib, rng):
    for _ in range(200):
        ids = random_complete(basic_lib, rng, max_len=15)
        for k in range(len(ids)):
            assert not is_complete(ids[:k], basic_lib)
            assert is_valid_prefix(ids[:k], basic_lib)


# --- parent / sibling ------------------------------------------------------

def test_root_has_no_parent(basic_lib):
    assert parent_sibling((), basic_lib) == (None, None)


def test_figure_example_parent_sibling(fig_lib):
    # next slot is div's second child; its completed left subtree is sin(...)
    prefix = ids_of(fig_lib, "div", "sin", "mul", "const", "x1")
    parent, sibling = parent_sibling(prefix, fig_lib)
    assert parent.symbol == "div"
    assert sibling.symbol == "sin"


def test_unary_parent_has_no_sibling(basic_lib):
    parent, sibling = parent_sibling(ids_of(basic_lib, "sin"), basic_lib)
    assert parent.symbol == "sin"
    assert sibling is None


def test_complete_traversal_has_no_next_slot(basic_lib):
    with pytest.raises(IncompleteTraversalError):
        parent_sibling(ids_of(basic_lib, "x1"), basic_lib)


def test_parent_sibling_matches_tree_oracle_on_random_prefixes(fig_lib, rng):
    checked = 0
    for _ in range(10_000):
        ids = random_complete(fig_lib, rng, max_len=14)
        k = int(rng.integers(0, len(ids)))
        prefix = ids[:k]
        parent, sibling = parent_sibling(prefix, fig_lib)
        want_parent, want_sibling = (
            (None, None) if k == 0 else _oracle_parent_sibling(prefix, fig_lib)
        )
        got = (None if parent is None else parent.id,
               None if sibling is None else sibling.id)
        assert got == (want_parent, want_sibling), prefix
        checked += 1
    assert checked == 10_000


# --- tree round trip -------------------------------------------------------

def test_single_leaf_round_trip(basic_lib):
    ids = ids_of(basic_lib, "x1")
    tree = to_tree(ids, basic_lib)
    assert tree.token.symbol == "x1" and tree.children == ()
    assert to_traversal(tree) == ids


def test_figure_example_tree_shape(fig_lib):
    ids = ids_of(fig_lib, "div", "sin", "mul", "const", "x1", "log", "x2")
    tree = to_tree(ids, fig_lib)
    assert tree.token.symbol == "div"
    assert tree.children[0].token.symbol == "sin"
    assert tree.children[0].children[0].token.symbol == "mul"
    assert tree.children[1].token.symbol == "log"
    assert to_traversal(tree) == ids


def test_round_trip_on_10000_random_traversals(fig_lib, rng):
    for _ in range(10_000):
        ids = random_complete(fig_lib, rng, max_len=30)
        assert to_traversal(to_tree(ids, fig_lib)) == ids


def test_to_tree_rejects_incomplete(basic_lib):
    with pytest.raises(IncompleteTraversalError):
        to_tree(ids_of(basic_lib, "add", "x1"), basic_lib)


# --- spans and rendering ---------------------------------------------------

def test_subtree_span_covers_each_subtree(basic_lib, rng):
    for _ in range(200):
        ids = random_complete(basic_lib, rng, max_len=20)
        for i in range(len(ids)):
            span = subtree_span(ids, basic_lib, i)
            assert is_complete(ids[i:i + span], basic_lib)


def test_render_infix_full_parentheses(fig_lib):
    ids = ids_of(fig_lib, "div", "sin", "mul", "const", "x1", "log", "x2")
    assert render_infix(ids, fig_lib, (2.5,)) == "(sin((2.5 * x1)) / log(x2))"


def test_render_infix_binary_nesting(basic_lib):
    ids = ids_of(basic_lib, "sub", "mul", "x1", "x1", "x1")
    assert render_infix(ids, basic_lib) == "((x1 * x1) - x1)"


def test_random_complete_respects_length_bounds(basic_lib, rng):
    lengths = [len(random_complete(basic_lib, rng, max_len=12, min_len=4))
               for _ in range(500)]
    assert min(lengths) >= 4 and max(lengths) <= 12
