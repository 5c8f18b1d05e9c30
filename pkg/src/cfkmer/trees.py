"""Weighted rooted trees, Newick IO, and the matched tree pair with marked points.

Trees here are tiny (a dozen nodes), so everything favors clarity over
asymptotics: distances walk parent pointers, and joint site laws sum over
all internal-state assignments.

A "marked point" is any labeled node.  Mid-edge points are materialized as
degree-2 nodes when marked, which keeps every labeled location a node and
lets marked trees round-trip through Newick (the parser accepts unary
internal nodes).  The sidecar syntax ``label@child:offset`` places a mark
on the edge into ``child``, ``offset`` length units below the parent.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "Tree",
    "NewickError",
    "parse_newick",
    "write_newick",
    "parse_marks",
    "PaperTreePair",
    "build_paper_trees",
    "validate_paper_constraints",
    "ConstraintReport",
    "SiteDistribution",
    "site_column_distribution",
    "trees_equal",
    "restrict_to_leaves",
]

ROOT_LABEL = "rho"
MAX_NODES_FOR_EXACT = 22


class NewickError(ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class Tree:
    """Rooted tree with non-negative edge lengths and labeled points."""

    def __init__(self):
        self.parent = {}
        self.children = {}
        self.edge_len = {}
        self.label_of = {}
        self.node_of = {}
        self.root = None
        self._next_id = 0

    def _new_node(self, label=None):
        nid = self._next_id
        self._next_id += 1
        self.children[nid] = []
        self.parent[nid] = None
        if label is not None:
            self.set_label(nid, label)
        return nid

    def set_root(self, label=None):
        if self.root is not None:
            raise ValueError("root already set")
        self.root = self._new_node(label)
        return self.root

    def set_label(self, nid, label):
        if label in self.node_of:
            raise ValueError(f"duplicate label {label!r}")
        self.label_of[nid] = label
        self.node_of[label] = nid

    def add_child(self, parent, length, label=None):
        if length < 0:
            raise ValueError(f"negative branch length {length}")
        nid = self._new_node(label)
        self.parent[nid] = parent
        self.children[parent].append(nid)
        self.edge_len[nid] = float(length)
        return nid

    def resolve(self, label):
        try:
            return self.node_of[label]
        except KeyError:
            raise KeyError(f"unknown point label {label!r}") from None

    def nodes(self):
        return list(self.children.keys())

    def leaves(self):
        return [n for n in self.children if not self.children[n]]

    def leaf_labels(self):
        return sorted(self.label_of[n] for n in self.leaves())

    def depth(self, nid):
        total = 0.0
        while self.parent[nid] is not None:
            total += self.edge_len[nid]
            nid = self.parent[nid]
        return total

    def _ancestor_path(self, nid):
        path = [nid]
        while self.parent[nid] is not None:
            nid = self.parent[nid]
            path.append(nid)
        return path

    def mrca(self, *labels):
        paths = [set(self._ancestor_path(self.resolve(l))) for l in labels]
        common = set.intersection(*paths)
        # deepest common ancestor: walk up from any member until inside all
        nid = self.resolve(labels[0])
        while nid not in common:
            nid = self.parent[nid]
        # nid is the first common ancestor on the path, i.e. the MRCA
        return nid

    def dist(self, u_label, v_label):
        """Sum of edge lengths on the unique path between two labeled points."""
        u = self.resolve(u_label)
        v = self.resolve(v_label)
        up = self._ancestor_path(u)
        vset = {n: i for i, n in enumerate(self._ancestor_path(v))}
        total = 0.0
        for node in up:
            if node in vset:
                # node is the meeting point; add v's climb
                w = v
                while w != node:
                    total += self.edge_len[w]
                    w = self.parent[w]
                return total
            total += self.edge_len[node]
        raise ValueError("disconnected labels (corrupt tree)")

    def mark_on_edge(self, label, child_label, offset):
        """Materialize a labeled point ``offset`` below the parent of ``child``."""
        child = self.resolve(child_label)
        if self.parent[child] is None:
            raise ValueError(f"{child_label!r} has no parent edge")
        length = self.edge_len[child]
        if not (0.0 <= offset <= length):
            raise ValueError(
                f"offset {offset} outside edge into {child_label!r} "
                f"of length {length}"
            )
        parent = self.parent[child]
        mid = self._new_node(label)
        self.parent[mid] = parent
        self.children[parent][self.children[parent].index(child)] = mid
        self.children[mid] = [child]
        self.edge_len[mid] = float(offset)
        self.parent[child] = mid
        self.edge_len[child] = length - offset
        return mid

    def copy(self):
        out = Tree()
        out.parent = dict(self.parent)
        out.children = {k: list(v) for k, v in self.children.items()}
        out.edge_len = dict(self.edge_len)
        out.label_of = dict(self.label_of)
        out.node_of = dict(self.node_of)
        out.root = self.root
        out._next_id = self._next_id
        return out


_LABEL_RE = re.compile(r"[^\s(),:;]+")
_NUMBER_RE = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")


def parse_newick(text, require_lengths=True):
    """Parse a Newick string into a Tree.

    Branch lengths are mandatory unless ``require_lengths=False``, in which
    case missing lengths default to 1.  Unary internal nodes are accepted
    (marked points serialize that way).  Errors carry the byte offset.
    """
    tree = Tree()
    pos = 0
    n = len(text)

    def skip_ws():
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def parse_node(parent):
        nonlocal pos
        skip_ws()
        if pos >= n:
            raise NewickError("unexpected end of input", pos)
        if text[pos] == "(":
            pos += 1
            if parent is None:
                nid = tree.set_root()
            else:
                nid = tree.add_child(parent, 0.0)
            while True:
                parse_node(nid)
                skip_ws()
                if pos < n and text[pos] == ",":
                    pos += 1
                    continue
                break
            skip_ws()
            if pos >= n or text[pos] != ")":
                raise NewickError("expected ')' or ','", pos)
            pos += 1
            label = read_label()
            if label:
                tree.set_label(nid, label)
            read_length(nid, internal=True)
            return nid
        label = read_label()
        if not label:
            raise NewickError("expected leaf label", pos)
        if parent is None:
            raise NewickError("single-node tree is not supported", pos)
        nid = tree.add_child(parent, 0.0, label=label)
        read_length(nid, internal=False)
        return nid

    def read_label():
        nonlocal pos
        skip_ws()
        m = _LABEL_RE.match(text, pos)
        if m:
            pos = m.end()
            return m.group(0)
        return None

    def read_length(nid, internal):
        nonlocal pos
        skip_ws()
        if pos < n and text[pos] == ":":
            pos += 1
            skip_ws()
            m = _NUMBER_RE.match(text, pos)
            if not m:
                raise NewickError("expected a branch length after ':'", pos)
            value = float(m.group(0))
            if value < 0:
                raise NewickError(f"negative branch length {value}", pos)
            pos = m.end()
            if tree.parent[nid] is not None:
                tree.edge_len[nid] = value
        else:
            if tree.parent[nid] is not None:
                if require_lengths:
                    raise NewickError("missing branch length", pos)
                tree.edge_len[nid] = 1.0

    parse_node(None)
    skip_ws()
    if pos >= n or text[pos] != ";":
        raise NewickError("expected ';'", pos)
    if tree.root is None:
        raise NewickError("empty tree", 0)
    return tree


def write_newick(tree, include_root_label=True):
    def fmt(nid):
        label = tree.label_of.get(nid, "")
        if tree.children[nid]:
            inner = ",".join(fmt(c) for c in tree.children[nid])
            body = f"({inner}){label}"
        else:
            body = label
        if tree.parent[nid] is not None:
            body += f":{tree.edge_len[nid]!r}"
        return body

    out = fmt(tree.root)
    if not include_root_label:
        label = tree.label_of.get(tree.root, "")
        if label and out.endswith(label):
            out = out[: -len(label)]
    return out + ";"


def parse_marks(text):
    """Parse sidecar mark lines of the form ``label@child:offset``."""
    marks = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = re.fullmatch(r"(?P<label>[^@\s]+)@(?P<child>[^:\s]+):(?P<off>\S+)", line)
        if not m:
            raise ValueError(f"bad mark syntax on line {lineno}: {raw!r}")
        marks.append((m["label"], m["child"], float(m["off"])))
    return marks


@dataclass(frozen=True)
class PaperTreePair:
    """The two trees that differ only in where leaf A attaches.

    Both trees share the leaf set {A, B, C, X4..Xn} and the weighted subtree
    on {B, C, X..}; A hangs (pendant length ``a``) off the C-side junction
    Cp in t1 and off the B-side junction Bp in t2.  Bp and Cp sit on the
    B-C path at depth h - s in both trees.
    """

    t1: Tree
    t2: Tree
    h: float
    s: float
    g: float
    a: float
    n: int

    @property
    def trees(self):
        return (self.t1, self.t2)

    def tree(self, which):
        if which in (1, "1", "t1", "T1"):
            return self.t1
        if which in (2, "2", "t2", "T2"):
            return self.t2
        raise ValueError(f"which tree? got {which!r}")


def build_paper_trees(h, s, g, a, n=3, x_pendant=None):
    """Construct the matched pair; preconditions name the violated inequality."""
    if not s > 0:
        raise ValueError(f"constraint violated: s > 0 (got s={s})")
    if not g > 0:
        raise ValueError(f"constraint violated: g > 0 (got g={g})")
    if not 0 < a:
        raise ValueError(f"constraint violated: a > 0 (got a={a})")
    if not a < s + g:
        raise ValueError(
            f"constraint violated: a < s+g (got a={a}, s+g={s + g}); "
            "dist(A,C) would be >= dist(B,C)"
        )
    if not s + g <= h:
        raise ValueError(f"constraint violated: s+g <= h (got s+g={s + g}, h={h})")
    if n < 3:
        raise ValueError(f"constraint violated: n >= 3 (got n={n})")

    j_depth = h - s - g / 2.0

    def one_tree(a_side):
        tree = Tree()
        root = tree.set_root(ROOT_LABEL)
        # caterpillar of X leaves along the root edge, above the junction
        attach = root
        used = 0.0
        for i in range(4, n + 1):
            step = j_depth * (i - 3) / (n - 2)
            node = tree.add_child(attach, step - used)
            pend = x_pendant if x_pendant is not None else h - step
            tree.add_child(node, pend, label=f"X{i}")
            attach, used = node, step
        junction = tree.add_child(attach, j_depth - used)
        b_mid = tree.add_child(junction, g / 2.0)
        c_mid = tree.add_child(junction, g / 2.0)
        tree.add_child(b_mid, s, label="B")
        tree.add_child(c_mid, s, label="C")
        tree.set_label(b_mid, "Bp")
        tree.set_label(c_mid, "Cp")
        tree.add_child(b_mid if a_side == "B" else c_mid, a, label="A")
        return tree

    return PaperTreePair(t1=one_tree("C"), t2=one_tree("B"), h=h, s=s, g=g, a=a, n=n)


def restrict_to_leaves(tree, keep_labels):
    """Steiner subtree spanning the root and the kept leaves, unary nodes sunk.

    Returns a nested tuple form that is equal between trees iff the weighted
    restrictions agree: leaf -> (label, length), internal -> (frozenset of
    children, length).  Lengths are rounded to 12 decimals so float-identical
    constructions compare equal.
    """
    keep = set(keep_labels)

    def build(nid, acc_len):
        kids = []
        for c in tree.children[nid]:
            sub = build(c, tree.edge_len[c])
            if sub is not None:
                kids.append(sub)
        label = tree.label_of.get(nid)
        if not tree.children[nid]:
            if label in keep:
                return (label, round(acc_len, 12))
            return None
        if len(kids) == 0:
            return None
        if len(kids) == 1 and nid != tree.root:
            child = kids[0]
            return (child[0], round(child[1] + acc_len, 12))
        return (frozenset(kids), round(acc_len, 12))

    return build(tree.root, 0.0)


@dataclass
class ConstraintReport:
    items: list = field(default_factory=list)  # (name, ok, detail)

    def add(self, name, ok, detail=""):
        self.items.append((name, bool(ok), detail))

    @property
    def all_ok(self):
        return all(ok for _, ok, _ in self.items)

    def failures(self):
        return [(n, d) for n, ok, d in self.items if not ok]


def validate_paper_constraints(pair, tol=1e-12):
    """Re-derive every defining property of the pair from raw distances."""
    report = ConstraintReport()
    t1, t2 = pair.t1, pair.t2

    report.add(
        "same leaf set",
        t1.leaf_labels() == t2.leaf_labels(),
        f"{t1.leaf_labels()} vs {t2.leaf_labels()}",
    )

    others = [l for l in t1.leaf_labels() if l != "A"]
    r1 = restrict_to_leaves(t1, others)
    r2 = restrict_to_leaves(t2, others)
    report.add("restriction to non-A leaves equal", r1 == r2, "")

    for i, t in ((1, t1), (2, t2)):
        mrca = t.mrca("A", "B", "C")
        below = _labels_below(t, mrca)
        bad = [l for l in below if l.startswith("X")]
        report.add(f"T{i}: no X leaf below MRCA(A,B,C)", not bad, f"found {bad}")

    for i, t in ((1, t1), (2, t2)):
        db, dc = t.dist(ROOT_LABEL, "B"), t.dist(ROOT_LABEL, "C")
        report.add(
            f"T{i}: dist(rho,B) == dist(rho,C)",
            math.isclose(db, dc, abs_tol=tol),
            f"{db} vs {dc}",
        )
        dbp, dcp = t.dist(ROOT_LABEL, "Bp"), t.dist(ROOT_LABEL, "Cp")
        report.add(
            f"T{i}: dist(rho,Bp) == dist(rho,Cp)",
            math.isclose(dbp, dcp, abs_tol=tol),
            f"{dbp} vs {dcp}",
        )

    d1 = t1.dist("A", "C")
    d2 = t2.dist("A", "B")
    report.add(
        "dist_T1(A,C) == dist_T2(A,B)", math.isclose(d1, d2, abs_tol=tol), f"{d1} vs {d2}"
    )
    for i, t in ((1, t1), (2, t2)):
        dbc = t.dist("B", "C")
        report.add(
            f"T{i}: dist_T1(A,C) < dist(B,C)", d1 < dbc - tol, f"{d1} vs {dbc}"
        )

    top1 = _three_leaf_topology(t1)
    top2 = _three_leaf_topology(t2)
    report.add("T1 restricted topology is ((A,C),B)", top1 == ("AC", "B"), str(top1))
    report.add("T2 restricted topology is ((A,B),C)", top2 == ("AB", "C"), str(top2))
    return report


def _labels_below(tree, nid):
    out = []
    stack = [nid]
    while stack:
        cur = stack.pop()
        for c in tree.children[cur]:
            stack.append(c)
        if not tree.children[cur] and cur in tree.label_of:
            out.append(tree.label_of[cur])
    return out


def _three_leaf_topology(tree):
    """Which pair of {A,B,C} is cherried, judged by MRCA depths."""
    pairs = {"AB": ("A", "B"), "AC": ("A", "C"), "BC": ("B", "C")}
    depths = {name: tree.depth(tree.mrca(*p)) for name, p in pairs.items()}
    cherry = max(depths, key=depths.get)
    outgroup = ({"A", "B", "C"} - set(cherry)).pop()
    return (cherry, outgroup)


@dataclass(frozen=True)
class SiteDistribution:
    """Joint law of one site's states at an ordered tuple of labeled points.

    ``probs[idx]`` is the probability of the joint state whose bit ``j``
    (most significant first) is the state at ``labels[j]``.
    """

    labels: tuple
    probs: tuple  # floats or Fractions, length 2^len(labels)
    backend: str = "float"

    def as_array(self):
        return np.array([float(p) for p in self.probs])

    def prob(self, states):
        idx = 0
        for s in states:
            idx = (idx << 1) | int(s)
        return self.probs[idx]


def _edge_flip(alpha, t, backend):
    p = (1.0 - math.exp(-2.0 * alpha * t)) / 2.0
    if backend == "rational":
        return Fraction(p)  # exact binary rational of the float value
    return p


def site_column_distribution(tree, points, alpha, backend="float"):
    """Exact joint single-site law at the given points.

    Sums over all joint node-state assignments: the root is uniform on
    {0,1} and each edge flips independently with probability
    (1 - exp(-2*alpha*t))/2.  The rational backend maps each edge's flip
    probability to its exact binary rational, which preserves the tree's
    conditional-independence structure exactly.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    nodes = tree.nodes()
    if len(nodes) > MAX_NODES_FOR_EXACT:
        raise ValueError(f"tree too large for exact summation ({len(nodes)} nodes)")
    order = {nid: i for i, nid in enumerate(nodes)}
    point_ids = [tree.resolve(p) for p in points]

    edges = []
    for nid in nodes:
        if tree.parent[nid] is not None:
            p = _edge_flip(alpha, tree.edge_len[nid], backend)
            edges.append((order[tree.parent[nid]], order[nid], p))

    half = Fraction(1, 2) if backend == "rational" else 0.5
    one = Fraction(1) if backend == "rational" else 1.0
    zero = Fraction(0) if backend == "rational" else 0.0

    out = [zero] * (1 << len(points))
    root_idx = order[tree.root]
    for assign in range(1 << len(nodes)):
        prob = half
        for pi, ci, p in edges:
            same = ((assign >> pi) ^ (assign >> ci)) & 1 == 0
            prob *= (one - p) if same else p
            if prob == zero:
                break
        if prob == zero:
            continue
        idx = 0
        for nid in point_ids:
            idx = (idx << 1) | ((assign >> order[nid]) & 1)
        out[idx] += prob
    _ = root_idx
    if backend == "rational":
        total = sum(out)
        out = [p / total for p in out]
    return SiteDistribution(labels=tuple(points), probs=tuple(out), backend=backend)


def trees_equal(t1, t2, tol=1e-12):
    """Structural equality up to child order: topology, labels, lengths."""

    def canon(tree, nid):
        label = tree.label_of.get(nid)
        kids = sorted(canon(tree, c) for c in tree.children[nid])
        length = tree.edge_len.get(nid)
        length = None if length is None else round(length, 12)
        return (label, length, tuple(kids))

    return canon(t1, t1.root) == canon(t2, t2.root)
