import logging
import random

import pytest

from discoref.corpus import Document, MentionSpan, paragraph_bounds_of, split_tokens
from discoref.discourse import (
    build_edu_table, edu_of_span, lca_distance, linear_distance, load_rst,
    merge_paragraph_trees, parse_trees, rhetorical_distance, save_rst,
)
from discoref.errors import AlignmentError, TreeFormatError
from helpers import (
    merged_dict, oracle_distances, oracle_edu_of_token, oracle_nuclearity,
    random_document_with_trees,
)


def _edu(lo, hi, text=""):
    return {"kind": "edu", "label": "span", "span": [lo, hi], "text": text}


def _rel(nuc, children, label="Elaboration"):
    return {
        "kind": "rel", "label": label, "nuc": nuc,
        "span": [children[0]["span"][0], children[-1]["span"][1]],
        "children": children,
    }


def _doc(text):
    tokens = split_tokens(text)
    return Document(id="d", text=text, tokens=tokens,
                    paragraph_bounds=paragraph_bounds_of(text, tokens), clusters=[])


def test_parse_single_edu_tree():
    trees = parse_trees({"paragraph_trees": [_edu(0, 4, "One.")]})
    assert len(trees) == 1
    assert trees[0].is_leaf and trees[0].id == 0


def test_parse_assigns_preorder_ids():
    tree = _rel("NS", [_edu(0, 3), _rel("NN", [_edu(3, 6), _edu(6, 9)])])
    (root,) = parse_trees({"paragraph_trees": [tree]})
    ids = [n.id for n in root.walk()]
    assert ids == [0, 1, 2, 3, 4]
    assert root.children[0].id == 1 and root.children[1].id == 2


def test_parse_rejects_structural_problems():
    with pytest.raises(TreeFormatError, match="gap"):
        parse_trees({"paragraph_trees": [_rel("NN", [_edu(0, 3), _edu(4, 8)])]})
    with pytest.raises(TreeFormatError, match="children"):
        parse_trees({"paragraph_trees": [_rel("NS", [_edu(0, 3)])]})
    with pytest.raises(TreeFormatError, match="nuclearity"):
        parse_trees({"paragraph_trees": [_rel("XX", [_edu(0, 3), _edu(3, 6)])]})
    with pytest.raises(TreeFormatError, match="is NS"):
        parse_trees({"paragraph_trees": [_rel("NS", [_edu(0, 3), _edu(3, 6), _edu(6, 9)])]})
    with pytest.raises(TreeFormatError, match="overlap"):
        parse_trees({"paragraph_trees": [_rel("NN", [_edu(0, 4), _edu(3, 6)])]})
    with pytest.raises(TreeFormatError):
        parse_trees({"paragraph_trees": []})
    bad_kind = {"kind": "edu", "label": "", "span": [0, 2], "children": [_edu(0, 2)]}
    with pytest.raises(TreeFormatError, match="must not have children"):
        parse_trees({"paragraph_trees": [bad_kind]})


def test_multinuclear_allows_higher_arity():
    tree = _rel("multiN", [_edu(0, 2), _edu(2, 4), _edu(4, 6)])
    (root,) = parse_trees({"paragraph_trees": [tree]})
    assert len(root.children) == 3


def test_rst_round_trip(tmp_path):
    dicts = [_rel("NS", [_edu(0, 6, "Ana. "), _edu(6, 10, "Bo.")]), _edu(11, 15, "End.")]
    trees = parse_trees({"paragraph_trees": dicts})
    path = tmp_path / "d.json"
    save_rst("d", trees, path)
    loaded = load_rst(path)
    assert loaded == trees


def test_load_rst_rejects_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{", encoding="utf-8")
    with pytest.raises(TreeFormatError):
        load_rst(path)
    path.write_text('{"paragraph_trees": 3}', encoding="utf-8")
    with pytest.raises(TreeFormatError):
        load_rst(path)


def test_merge_single_tree_returned_unchanged():
    (tree,) = parse_trees({"paragraph_trees": [_edu(0, 4)]})
    assert merge_paragraph_trees([tree]) is tree
    with pytest.raises(ValueError):
        merge_paragraph_trees([])


def test_merge_three_trees_right_branching():
    dicts = [_edu(0, 2), _edu(3, 5), _edu(6, 8)]
    trees = parse_trees({"paragraph_trees": dicts})
    root = merge_paragraph_trees(trees)
    assert root.label == "Joint" and root.nuclearity == "multiN"
    assert root.children[0] is trees[0]
    inner = root.children[1]
    assert inner.label == "Joint" and inner.nuclearity == "multiN"
    assert inner.children[0] is trees[1] and inner.children[1] is trees[2]
    assert root.char_span == (0, 8)
    # new ids do not collide with the originals
    original_ids = {n.id for t in trees for n in t.walk()}
    new_ids = {n.id for n in root.walk()} - original_ids
    assert len(new_ids) == 2 and min(new_ids) > max(original_ids)


@pytest.mark.parametrize("n", [1, 2, 5, 20])
def test_merge_chain_law(n):
    rng = random.Random(100 + n)
    doc, tree_dicts, trees = random_document_with_trees(rng, n_edus=max(n, 1), max_paragraphs=1)
    # treat every EDU of the single paragraph as its own "paragraph tree"
    leaves = trees[0].leaves() if n > 1 else [trees[0]]
    merged = merge_paragraph_trees(list(leaves))
    joints = [node for node in merged.walk() if node.label == "Joint"]
    assert len(joints) == (n - 1 if n > 1 else 0)
    ordered = merged.leaves()
    assert [l.id for l in ordered] == [l.id for l in leaves]
    for joint in joints:
        assert joint.nuclearity == "multiN"


def test_edu_table_ns_hand_case():
    text = "Ana met Bo. They smiled."
    doc = _doc(text)
    tree = _rel("NS", [_edu(0, 12, text[:12]), _edu(12, 24, text[12:])])
    (root,) = parse_trees({"paragraph_trees": [tree]})
    table = build_edu_table(root, doc)
    assert table.n_edus == 2
    assert table.is_nuclear == [True, False]
    assert table.depth == [1, 1]
    assert table.edu_of_token == [0, 0, 0, 0, 1, 1, 1]
    assert table.edus[0][1] == (0, 3) and table.edus[1][1] == (4, 6)


def test_edu_table_multinuclear_all_nuclear():
    text = "One. Two. Three."
    doc = _doc(text)
    tree = _rel("multiN", [_edu(0, 5), _edu(5, 10), _edu(10, 16)])
    (root,) = parse_trees({"paragraph_trees": [tree]})
    table = build_edu_table(root, doc)
    assert table.is_nuclear == [True, True, True]
    assert table.nuclear_count(-1, 2) == 3
    assert table.nuclear_count(0, 2) == 2


def test_edu_table_single_leaf_root_is_nuclear():
    doc = _doc("Word.")
    (root,) = parse_trees({"paragraph_trees": [_edu(0, 5)]})
    table = build_edu_table(root, doc)
    assert table.is_nuclear == [True] and table.depth == [0]


def test_edu_table_straddling_token_warns(caplog):
    doc = _doc("ab cd ef")
    tree = _rel("NN", [_edu(0, 4), _edu(4, 8)])
    (root,) = parse_trees({"paragraph_trees": [tree]})
    with caplog.at_level(logging.WARNING):
        table = build_edu_table(root, doc)
    assert table.edu_of_token == [0, 0, 1]
    assert any("straddles" in r.message for r in caplog.records)


def test_edu_table_errors():
    doc = _doc("ab cd")
    # second EDU covers no token start
    tree = _rel("NN", [_edu(0, 4), _edu(4, 5)])
    (root,) = parse_trees({"paragraph_trees": [tree]})
    with pytest.raises(AlignmentError, match="cover no tokens"):
        build_edu_table(root, doc)
    # EDU span ends before the last token
    (short_root,) = parse_trees({"paragraph_trees": [_edu(0, 2)]})
    with pytest.raises(AlignmentError, match="outside every EDU"):
        build_edu_table(short_root, doc)


def test_distances_hand_case():
    text = "One. Two. Three. Four."
    doc = _doc(text)
    tree = _rel("NS", [
        _edu(0, 5),
        _rel("SN", [_edu(5, 10), _rel("NN", [_edu(10, 17), _edu(17, 22)])]),
    ])
    (root,) = parse_trees({"paragraph_trees": [tree]})
    table = build_edu_table(root, doc)
    assert table.is_nuclear == [True, False, True, True]
    assert table.depth == [1, 2, 3, 3]

    span_e0 = MentionSpan(0, 0)
    span_e2 = MentionSpan(4, 4)
    span_e3 = MentionSpan(6, 6)
    assert edu_of_span(table, span_e0) == 0
    assert edu_of_span(table, span_e3) == 3
    assert linear_distance(table, span_e0, span_e3) == 3
    assert rhetorical_distance(table, span_e0, span_e3) == 2
    assert lca_distance(table, span_e0, span_e3) == 3
    assert linear_distance(table, span_e2, span_e3) == 1
    assert rhetorical_distance(table, span_e2, span_e3) == 1
    assert lca_distance(table, span_e2, span_e3) == 1


def test_distances_same_edu_are_zero():
    doc = _doc("Alpha beta gamma.")
    (root,) = parse_trees({"paragraph_trees": [_edu(0, 17)]})
    table = build_edu_table(root, doc)
    a, b = MentionSpan(0, 0), MentionSpan(1, 2)
    assert linear_distance(table, a, b) == 0
    assert rhetorical_distance(table, a, b) == 0
    assert lca_distance(table, a, b) == 0


def test_distances_require_precedence():
    doc = _doc("Alpha beta. Gamma.")
    tree = _rel("NN", [_edu(0, 12), _edu(12, 18)])
    (root,) = parse_trees({"paragraph_trees": [tree]})
    table = build_edu_table(root, doc)
    with pytest.raises(ValueError):
        linear_distance(table, MentionSpan(3, 3), MentionSpan(0, 0))


def test_distances_match_oracle_on_random_trees():
    rng = random.Random(2024)
    for _ in range(60):
        n_edus = rng.randint(1, 18)
        doc, tree_dicts, trees = random_document_with_trees(rng, n_edus)
        merged = merge_paragraph_trees(trees)
        table = build_edu_table(merged, doc)
        oracle_tree = merged_dict(tree_dicts)
        assert table.is_nuclear == oracle_nuclearity(oracle_tree)
        assert table.edu_of_token == oracle_edu_of_token(oracle_tree, doc)
        for _ in range(12):
            u_j = rng.randrange(table.n_edus)
            u_i = rng.randrange(u_j, table.n_edus)
            tok_j = rng.randrange(*table.edus[u_j][1]) if table.edus[u_j][1][0] < table.edus[u_j][1][1] else table.edus[u_j][1][0]
            tok_i = rng.randrange(*table.edus[u_i][1]) if table.edus[u_i][1][0] < table.edus[u_i][1][1] else table.edus[u_i][1][0]
            if tok_j > tok_i:
                continue
            span_j, span_i = MentionSpan(tok_j, tok_j), MentionSpan(tok_i, tok_i)
            d_lin = linear_distance(table, span_j, span_i)
            d_rh = rhetorical_distance(table, span_j, span_i)
            d_lca = lca_distance(table, span_j, span_i)
            assert (d_lin, d_rh, d_lca) == oracle_distances(oracle_tree, u_j, u_i)
            assert 0 <= d_rh <= d_lin
            if u_i == u_j:
                assert d_lin == d_rh == d_lca == 0


def test_right_branching_chain_lca_growth():
    # chain of n single-EDU paragraphs: first EDU sits one edge under the
    # root, the last sits n - 1 edges deep
    text = " ".join(f"w{k}." for k in range(6))
    doc = _doc(text)
    spans = []
    pos = 0
    for k in range(6):
        end = pos + len(f"w{k}.")
        spans.append((pos, min(end + 1, len(text))))
        pos = end + 1
    spans[-1] = (spans[-1][0], len(text))
    leaves = parse_trees({"paragraph_trees": [_edu(lo, hi) for lo, hi in spans]})
    merged = merge_paragraph_trees(leaves)
    table = build_edu_table(merged, doc)
    assert table.depth[0] == 1
    assert table.depth[-1] == 5
    first = MentionSpan(*[table.edus[0][1][0]] * 2)
    # the common ancestor with the first EDU is always the root, so the
    # distance is the later leaf's depth: k + 1 in the middle of the
    # chain, n - 1 = 5 for the final leaf, which shares the deepest node
    for k in range(1, 6):
        last = MentionSpan(*[table.edus[k][1][0]] * 2)
        expected = k + 1 if k < 5 else 5
        assert lca_distance(table, first, last) == expected
