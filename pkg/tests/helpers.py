"""Shared test utilities: random tree/document factories and independent
distance oracles that work directly on the dict form of the trees,
never on the package's table structures."""

from __future__ import annotations

import random

from discoref.corpus import Document, paragraph_bounds_of, split_tokens
from discoref.discourse import parse_trees

WORDS = (
    "ash", "birch", "cedar", "dune", "elm", "fern", "glen", "heath",
    "iris", "juniper", "kelp", "larch", "moss", "nettle", "oak", "pine",
    "quince", "reed", "sage", "thorn",
)


def random_tree_dict(rng: random.Random, edu_spans: list[tuple[int, int]], text: str) -> dict:
    """Random tree over contiguous EDU char spans, arbitrary shape."""
    if len(edu_spans) == 1:
        lo, hi = edu_spans[0]
        return {"kind": "edu", "label": "span", "span": [lo, hi], "text": text[lo:hi]}
    max_groups = min(4, len(edu_spans))
    n_groups = 2 if max_groups == 2 or rng.random() < 0.7 else rng.randint(3, max_groups)
    cuts = sorted(rng.sample(range(1, len(edu_spans)), n_groups - 1))
    groups = []
    lo = 0
    for cut in cuts + [len(edu_spans)]:
        groups.append(edu_spans[lo:cut])
        lo = cut
    children = [random_tree_dict(rng, g, text) for g in groups]
    if n_groups == 2:
        nuc = rng.choice(("NN", "NS", "SN", "multiN"))
    else:
        nuc = "multiN"
    return {
        "kind": "rel",
        "label": rng.choice(("Elaboration", "Contrast", "Background", "Joint")),
        "nuc": nuc,
        "span": [children[0]["span"][0], children[-1]["span"][1]],
        "children": children,
    }


def random_document_with_trees(rng: random.Random, n_edus: int, max_paragraphs: int = 3):
    """A document of simple word sentences plus random paragraph trees.

    Returns (document, paragraph tree dicts, trees parsed by the package).
    Each EDU is one sentence of 1 to 4 words; EDU spans tile each
    paragraph exactly.
    """
    n_par = rng.randint(1, min(max_paragraphs, n_edus))
    cuts = sorted(rng.sample(range(1, n_edus), n_par - 1)) if n_par > 1 else []
    sizes = []
    lo = 0
    for cut in cuts + [n_edus]:
        sizes.append(cut - lo)
        lo = cut

    parts = []
    pos = 0
    paragraph_edu_spans: list[list[tuple[int, int]]] = []
    for p, size in enumerate(sizes):
        if p:
            parts.append("\n")
            pos += 1
        spans = []
        sentence_bounds = []
        for s in range(size):
            if s:
                parts.append(" ")
                pos += 1
            start = pos
            sentence = " ".join(rng.choice(WORDS) for _ in range(rng.randint(1, 4))) + "."
            parts.append(sentence)
            pos += len(sentence)
            sentence_bounds.append((start, pos))
        for s, (start, end) in enumerate(sentence_bounds):
            hi = sentence_bounds[s + 1][0] if s + 1 < size else end
            spans.append((start, hi))
        paragraph_edu_spans.append(spans)
    text = "".join(parts)

    tree_dicts = [random_tree_dict(rng, spans, text) for spans in paragraph_edu_spans]
    trees = parse_trees({"paragraph_trees": tree_dicts}, where="random")
    tokens = split_tokens(text)
    doc = Document(
        id="random", text=text, tokens=tokens,
        paragraph_bounds=paragraph_bounds_of(text, tokens), clusters=[],
    )
    return doc, tree_dicts, trees


def merged_dict(tree_dicts: list[dict]) -> dict:
    """Right-branching multinuclear merge, computed independently."""
    acc = tree_dicts[-1]
    for t in reversed(tree_dicts[:-1]):
        acc = {
            "kind": "rel", "label": "Joint", "nuc": "multiN",
            "span": [t["span"][0], acc["span"][1]],
            "children": [t, acc],
        }
    return acc


def oracle_leaves(tree_dict: dict) -> list[dict]:
    """Leaf dicts in text order."""
    if tree_dict["kind"] == "edu":
        return [tree_dict]
    out = []
    for child in tree_dict["children"]:
        out.extend(oracle_leaves(child))
    return out


def oracle_leaf_paths(tree_dict: dict) -> list[list[int]]:
    """For each leaf in text order, the list of node object ids from the
    leaf itself up to the root."""
    paths = []

    def walk(node, trail):
        trail = trail + [id(node)]
        if node["kind"] == "edu":
            paths.append(list(reversed(trail)))
            return
        for child in node["children"]:
            walk(child, trail)

    walk(tree_dict, [])
    return paths


def oracle_nuclearity(tree_dict: dict) -> list[bool]:
    """Per-leaf nuclear flags, read from each leaf's parent relation."""
    flags = []

    def walk(node, role):
        if node["kind"] == "edu":
            flags.append(role)
            return
        nuc = node["nuc"]
        for pos, child in enumerate(node["children"]):
            if nuc in ("NN", "multiN"):
                walk(child, True)
            elif nuc == "NS":
                walk(child, pos == 0)
            else:
                walk(child, pos == 1)

    walk(tree_dict, True)
    return flags


def oracle_edu_of_token(tree_dict: dict, doc: Document) -> list[int]:
    """Token to EDU assignment by char containment, leaf spans in order."""
    leaves = oracle_leaves(tree_dict)
    out = []
    for tok in doc.tokens:
        found = None
        for k, leaf in enumerate(leaves):
            if leaf["span"][0] <= tok.char_start < leaf["span"][1]:
                found = k
                break
        assert found is not None, "token outside every EDU"
        out.append(found)
    return out


def oracle_distances(tree_dict: dict, u_j: int, u_i: int) -> tuple[int, int, int]:
    """(linear, nuclear-count, edges-to-common-ancestor) for EDU indices
    u_j <= u_i, computed by scanning and path walking."""
    assert u_j <= u_i
    d_lin = u_i - u_j
    flags = oracle_nuclearity(tree_dict)
    d_rh = sum(1 for k in range(u_j + 1, u_i + 1) if flags[k])
    if u_i == u_j:
        return d_lin, d_rh, 0
    paths = oracle_leaf_paths(tree_dict)
    ancestors_j = set(paths[u_j])
    for steps, node in enumerate(paths[u_i]):
        if node in ancestors_j:
            return d_lin, d_rh, steps
    raise AssertionError("no common ancestor found")
