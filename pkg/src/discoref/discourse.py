"""Rhetorical structure trees and tree-derived distances between mentions.

Trees come one per paragraph, with EDU leaves holding character spans
over the document text. A document-level tree is the right-branching
multinuclear merge of the paragraph trees. Mention distances are read
off an :class:`EduTable` built from the merged tree: plain EDU-index
distance, count of nuclear EDUs between the mentions, and the number of
tree edges from the later mention's EDU up to the common ancestor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .corpus import Document, MentionSpan
from .errors import AlignmentError, TreeFormatError

log = logging.getLogger(__name__)

NUCLEARITIES = ("NN", "NS", "SN", "multiN")

MERGE_LABEL = "Joint"


@dataclass
class RstNode:
    """One tree node. Leaves have kind "edu", inner nodes kind "rel".

    ``char_span`` is half-open over the document text. For inner nodes
    it spans from the first child's start to the last child's end.
    ``nuclearity`` is empty for leaves; for inner nodes it is one of
    NN, NS, SN (binary) or multiN (any arity >= 2, all children nuclei).
    Node ids are unique within a document, assigned in load order.
    """

    id: int
    kind: str
    label: str
    nuclearity: str
    char_span: tuple[int, int]
    children: list["RstNode"] = field(default_factory=list)
    text: str = ""

    @property
    def is_leaf(self) -> bool:
        return self.kind == "edu"

    def leaves(self) -> list["RstNode"]:
        if self.is_leaf:
            return [self]
        out: list[RstNode] = []
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend(reversed(node.children))
        return out

    def walk(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


def _node_from_dict(data: dict, counter: list[int], where: str) -> RstNode:
    if not isinstance(data, dict):
        raise TreeFormatError(f"{where}: tree node must be a JSON object")
    kind = data.get("kind")
    if kind not in ("edu", "rel"):
        raise TreeFormatError(f"{where}: node kind must be 'edu' or 'rel', got {kind!r}")
    span = data.get("span")
    try:
        span = (int(span[0]), int(span[1]))
    except (TypeError, ValueError, IndexError) as exc:
        raise TreeFormatError(f"{where}: node 'span' must be a [start, end] pair") from exc
    node_id = counter[0]
    counter[0] += 1
    if kind == "edu":
        node = RstNode(
            id=node_id,
            kind="edu",
            label=str(data.get("label", "")),
            nuclearity="",
            char_span=span,
            text=str(data.get("text", "")),
        )
        if data.get("children"):
            raise TreeFormatError(f"{where}: EDU node {node_id} must not have children")
        return node
    nuc = data.get("nuc")
    if nuc not in NUCLEARITIES:
        raise TreeFormatError(f"{where}: node {node_id} nuclearity must be one of {NUCLEARITIES}, got {nuc!r}")
    children = [_node_from_dict(c, counter, where) for c in data.get("children", [])]
    node = RstNode(
        id=node_id,
        kind="rel",
        label=str(data.get("label", "")),
        nuclearity=nuc,
        char_span=span,
        children=children,
    )
    return node


def validate_tree(root: RstNode, where: str = "tree", allow_gaps_at: frozenset[int] = frozenset()) -> None:
    """Check structural invariants below ``root``; raise TreeFormatError.

    Inner nodes need >= 2 children (exactly 2 unless multiN), sibling
    spans must be in order and tile the parent span exactly. Nodes whose
    ids are in ``allow_gaps_at`` may have whitespace gaps between
    children (used for merge products, where paragraph subtrees are
    separated by the newline character).
    """
    for node in root.walk():
        if node.is_leaf:
            if node.char_span[0] >= node.char_span[1]:
                raise TreeFormatError(f"{where}: EDU node {node.id} has an empty span")
            continue
        n_children = len(node.children)
        if n_children < 2:
            raise TreeFormatError(f"{where}: relation node {node.id} has {n_children} children, needs at least 2")
        if node.nuclearity in ("NN", "NS", "SN") and n_children != 2:
            raise TreeFormatError(f"{where}: relation node {node.id} is {node.nuclearity} but has {n_children} children")
        if node.char_span != (node.children[0].char_span[0], node.children[-1].char_span[1]):
            raise TreeFormatError(f"{where}: relation node {node.id} span does not match its children")
        for left, right in zip(node.children, node.children[1:]):
            if left.char_span[1] > right.char_span[0]:
                raise TreeFormatError(
                    f"{where}: children of node {node.id} overlap or are out of order "
                    f"(nodes {left.id} and {right.id})"
                )
            if left.char_span[1] != right.char_span[0] and node.id not in allow_gaps_at:
                raise TreeFormatError(
                    f"{where}: gap between sibling spans under node {node.id} "
                    f"(nodes {left.id} and {right.id})"
                )


def parse_trees(data: dict, where: str = "trees") -> list[RstNode]:
    """Build and validate paragraph trees from the interchange dict form.

    Node ids are assigned in document preorder across all paragraph
    trees, so they are unique within the document.
    """
    if not isinstance(data, dict) or not isinstance(data.get("paragraph_trees"), list):
        raise TreeFormatError(f"{where}: expected an object with a 'paragraph_trees' list")
    counter = [0]
    trees = [_node_from_dict(t, counter, where) for t in data["paragraph_trees"]]
    if not trees:
        raise TreeFormatError(f"{where}: document has no paragraph trees")
    for tree in trees:
        validate_tree(tree, where=where)
    return trees


def load_rst(path) -> list[RstNode]:
    """Load a document's paragraph trees from JSON, validating structure."""
    import json
    from pathlib import Path

    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise TreeFormatError(f"{path}: cannot read: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise TreeFormatError(f"{path}: invalid JSON at byte {exc.pos}: {exc.msg}") from exc
    return parse_trees(data, where=str(path))


def _node_to_dict(node: RstNode) -> dict:
    if node.is_leaf:
        return {"kind": "edu", "label": node.label, "span": list(node.char_span), "text": node.text}
    return {
        "kind": "rel",
        "label": node.label,
        "nuc": node.nuclearity,
        "span": list(node.char_span),
        "children": [_node_to_dict(c) for c in node.children],
    }


def save_rst(doc_id: str, trees: list[RstNode], path) -> None:
    from .corpus import dump_json

    dump_json({"id": doc_id, "paragraph_trees": [_node_to_dict(t) for t in trees]}, path)


def merge_paragraph_trees(trees: list[RstNode]) -> RstNode:
    """Fold paragraph trees into one document tree, right to left.

    Each step wraps the current accumulator and the paragraph before it
    in a multinuclear node, so the result is a right-branching chain of
    n - 1 such nodes whose leaves-as-children are the original roots,
    untouched. A single tree is returned as is.
    """
    if not trees:
        raise ValueError("cannot merge an empty tree list")
    if len(trees) == 1:
        return trees[0]
    next_id = max(node.id for t in trees for node in t.walk()) + 1
    acc = trees[-1]
    for t in reversed(trees[:-1]):
        acc = RstNode(
            id=next_id,
            kind="rel",
            label=MERGE_LABEL,
            nuclearity="multiN",
            char_span=(t.char_span[0], acc.char_span[1]),
            children=[t, acc],
        )
        next_id += 1
    return acc


@dataclass
class EduTable:
    """Flat view of a document tree, indexed for distance queries.

    ``edus`` lists (leaf node id, inclusive token range) in text order.
    ``is_nuclear`` marks each EDU's role under its parent (children of
    NN/multiN nodes all count as nuclear; a root that is itself a leaf
    counts as nuclear). ``depth`` is the leaf's edge distance from the
    root. ``parent`` maps every node id to its parent's id (root maps
    to None); ``node_depth`` covers inner nodes too.
    """

    edus: list[tuple[int, tuple[int, int]]]
    is_nuclear: list[bool]
    depth: list[int]
    parent: dict[int, int | None]
    node_depth: dict[int, int]
    edu_of_token: list[int]
    leaf_index: dict[int, int]
    _nuclear_prefix: list[int] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self._nuclear_prefix:
            prefix = [0]
            for flag in self.is_nuclear:
                prefix.append(prefix[-1] + int(flag))
            self._nuclear_prefix = prefix

    @property
    def n_edus(self) -> int:
        return len(self.edus)

    def nuclear_count(self, lo: int, hi: int) -> int:
        """Number of nuclear EDUs with index in the half-open (lo, hi]."""
        return self._nuclear_prefix[hi + 1] - self._nuclear_prefix[lo + 1]


def build_edu_table(tree: RstNode, doc: Document) -> EduTable:
    """Align a document tree's EDUs with the document's tokens.

    Each token belongs to the EDU whose character span contains the
    token's first character; a token protruding past its EDU's end is
    kept there with a logged warning. EDUs that end up with no tokens,
    or tokens no EDU covers, are alignment errors.
    """
    parent: dict[int, int | None] = {tree.id: None}
    node_depth: dict[int, int] = {tree.id: 0}
    leaves: list[RstNode] = []
    nuclear: dict[int, bool] = {tree.id: True}

    stack = [tree]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            leaves.append(node)
            continue
        for pos, child in enumerate(node.children):
            parent[child.id] = node.id
            node_depth[child.id] = node_depth[node.id] + 1
            if node.nuclearity in ("NN", "multiN"):
                nuclear[child.id] = True
            else:
                nuclear[child.id] = (node.nuclearity == "NS") == (pos == 0)
        stack.extend(reversed(node.children))

    leaves.sort(key=lambda n: n.char_span[0])
    leaf_index = {leaf.id: k for k, leaf in enumerate(leaves)}

    edu_of_token: list[int] = []
    ranges: list[list[int]] = [[-1, -1] for _ in leaves]
    k = 0
    for t, tok in enumerate(doc.tokens):
        while k < len(leaves) and tok.char_start >= leaves[k].char_span[1]:
            k += 1
        if k >= len(leaves) or tok.char_start < leaves[k].char_span[0]:
            raise AlignmentError(f"{doc.id}: token {t} at char {tok.char_start} is outside every EDU span")
        if tok.char_end > leaves[k].char_span[1]:
            log.warning("%s: token %d straddles the boundary of EDU node %d", doc.id, t, leaves[k].id)
        edu_of_token.append(k)
        if ranges[k][0] < 0:
            ranges[k][0] = t
        ranges[k][1] = t

    empty = [leaves[k].id for k, (a, _) in enumerate(ranges) if a < 0]
    if empty:
        raise AlignmentError(f"{doc.id}: EDU nodes {empty} cover no tokens")

    return EduTable(
        edus=[(leaf.id, (a, b)) for leaf, (a, b) in zip(leaves, ranges)],
        is_nuclear=[nuclear[leaf.id] for leaf in leaves],
        depth=[node_depth[leaf.id] for leaf in leaves],
        parent=parent,
        node_depth=node_depth,
        edu_of_token=edu_of_token,
        leaf_index=leaf_index,
    )


def edu_of_span(table: EduTable, span: MentionSpan) -> int:
    """EDU index anchoring a mention: the EDU of its first token."""
    if span.start >= len(table.edu_of_token):
        raise AlignmentError(f"mention start {span.start} is beyond the aligned tokens")
    return table.edu_of_token[span.start]


def _ordered_edus(table: EduTable, antecedent: MentionSpan, anaphor: MentionSpan) -> tuple[int, int]:
    if antecedent.start > anaphor.start:
        raise ValueError("antecedent must not start after the anaphor")
    return edu_of_span(table, antecedent), edu_of_span(table, anaphor)


def linear_distance(table: EduTable, antecedent: MentionSpan, anaphor: MentionSpan) -> int:
    """EDU-index difference between the anaphor and its antecedent."""
    u_j, u_i = _ordered_edus(table, antecedent, anaphor)
    return u_i - u_j


def rhetorical_distance(table: EduTable, antecedent: MentionSpan, anaphor: MentionSpan) -> int:
    """Count of nuclear EDUs strictly after the antecedent's EDU, up to
    and including the anaphor's. Zero when both mentions share an EDU."""
    u_j, u_i = _ordered_edus(table, antecedent, anaphor)
    return table.nuclear_count(u_j, u_i)


def lca_distance(table: EduTable, antecedent: MentionSpan, anaphor: MentionSpan) -> int:
    """Edges from the anaphor's EDU leaf up to the lowest common ancestor
    of both mentions' leaves. Zero when both mentions share an EDU."""
    u_j, u_i = _ordered_edus(table, antecedent, anaphor)
    if u_j == u_i:
        return 0
    a = table.edus[u_j][0]
    b = table.edus[u_i][0]
    depth_b = table.node_depth[b]
    while table.node_depth[a] > table.node_depth[b]:
        a = table.parent[a]
    while table.node_depth[b] > table.node_depth[a]:
        b = table.parent[b]
    while a != b:
        a = table.parent[a]
        b = table.parent[b]
    return depth_b - table.node_depth[b]
