"""Dataset loading and writing, split generation, and synthetic graphs."""
from __future__ import annotations

import gzip
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import Graph

log = logging.getLogger(__name__)

TASKS = ("node", "graph", "edge")
MANIFEST_VERSION = 1


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    name: str
    task: str
    graphs: tuple
    num_classes: int
    class_names: tuple = ()
    graph_labels: np.ndarray | None = None
    edge_labels: np.ndarray | None = None
    node_ids: tuple | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        graphs = tuple(self.graphs)
        if not graphs:
            raise ValueError("a dataset needs at least one graph")
        widths = {g.num_features for g in graphs}
        if len(widths) != 1:
            raise ValueError(f"graphs disagree on feature count: {sorted(widths)}")
        object.__setattr__(self, "graphs", graphs)
        for labels in self._label_arrays():
            if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise ValueError(f"labels must lie in [0, {self.num_classes})")

    def _label_arrays(self):
        if self.task == "graph":
            if self.graph_labels is None or len(self.graph_labels) != len(self.graphs):
                raise ValueError("graph task needs one label per graph")
            yield np.asarray(self.graph_labels)
        elif self.task == "edge":
            if self.edge_labels is None:
                raise ValueError("edge task needs edge labels")
            yield np.asarray(self.edge_labels)
        else:
            labels = self.graphs[0].node_labels
            if labels is None:
                raise ValueError("node task needs node labels")
            yield labels[labels >= 0]

    @property
    def graph(self) -> Graph:
        return self.graphs[0]

    @property
    def num_features(self) -> int:
        return self.graphs[0].num_features

    @property
    def labels(self) -> np.ndarray:
        """Labels of the entities being classified."""
        if self.task == "graph":
            return np.asarray(self.graph_labels)
        if self.task == "edge":
            return np.asarray(self.edge_labels)
        return self.graphs[0].node_labels

    @property
    def population(self) -> int:
        return len(self.labels)

    def equals(self, other) -> bool:
        def same(a, b):
            if a is None or b is None:
                return a is b
            return np.array_equal(a, b)
        return (
            self.task == other.task
            and self.num_classes == other.num_classes
            and tuple(self.class_names) == tuple(other.class_names)
            and len(self.graphs) == len(other.graphs)
            and all(a == b for a, b in zip(self.graphs, other.graphs))
            and same(self.graph_labels, other.graph_labels)
            and same(self.edge_labels, other.edge_labels)
        )


def _open_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt")
    return open(path)


def _checksum(*paths):
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def _find(path: Path):
    """``path`` or its gzipped sibling."""
    if path.exists():
        return path
    gz = path.with_name(path.name + ".gz")
    if gz.exists():
        return gz
    raise FileNotFoundError(path)


# -- citation networks ------------------------------------------------------

def load_citation_dataset(content_path, cites_path, name=None,
                          strict=False) -> DatasetBundle:
    """Read a ``.content`` / ``.cites`` pair into an undirected node-task bundle.

    Content lines are ``<id> <feature>* <label>``; cites lines are
    ``<cited id> <citing id>``.  Labels are numbered in order of first
    appearance.  Citations naming an unknown paper are dropped and counted in
    ``info["dangling_edges"]`` (or raise when ``strict``).  Repeated
    citations between the same pair collapse to a single unit-weight edge.
    """
    content_path, cites_path = Path(content_path), Path(cites_path)
    ids, rows, label_idx = [], [], []
    index, classes = {}, {}
    width = None
    with _open_text(content_path) as fh:
        for lineno, line in enumerate(fh, 1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) < 2:
                raise DatasetFormatError(f"{content_path}:{lineno}: expected id and label")
            feats = tokens[1:-1]
            if width is None:
                width = len(feats)
            elif len(feats) != width:
                raise DatasetFormatError(
                    f"{content_path}:{lineno}: expected {width} features, got {len(feats)}"
                )
            if tokens[0] in index:
                raise DatasetFormatError(f"{content_path}:{lineno}: duplicate id {tokens[0]}")
            try:
                rows.append([float(v) for v in feats])
            except ValueError:
                raise DatasetFormatError(
                    f"{content_path}:{lineno}: non-numeric feature value"
                ) from None
            index[tokens[0]] = len(ids)
            ids.append(tokens[0])
            label_idx.append(classes.setdefault(tokens[-1], len(classes)))
    if not ids:
        raise DatasetFormatError(f"{content_path}: no nodes")

    pairs, dangling, raw = set(), 0, 0
    with _open_text(cites_path) as fh:
        for lineno, line in enumerate(fh, 1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 2:
                raise DatasetFormatError(f"{cites_path}:{lineno}: expected two ids")
            raw += 1
            cited, citing = tokens
            if cited not in index or citing not in index:
                if strict:
                    raise DatasetFormatError(
                        f"{cites_path}:{lineno}: edge references unknown node"
                    )
                dangling += 1
                continue
            u, v = index[citing], index[cited]
            pairs.add((min(u, v), max(u, v)))
    if dangling:
        log.warning("%s: dropped %d citations with unknown endpoints", cites_path, dangling)

    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    graph = Graph.from_edges(len(ids), edges, features=np.array(rows).reshape(len(ids), -1),
                             node_labels=label_idx)
    info = {
        "raw_edges": raw,
        "dangling_edges": dangling,
        "undirected_edges": len(pairs),
        "checksum": _checksum(content_path, cites_path),
    }
    return DatasetBundle(
        name=name or content_path.name.split(".")[0],
        task="node",
        graphs=(graph,),
        num_classes=len(classes),
        class_names=tuple(classes),
        node_ids=tuple(ids),
        info=info,
    )


def load_citation_dir(path, name=None, strict=False) -> DatasetBundle:
    """Load ``<name>.content`` and ``<name>.cites`` (optionally gzipped) from a directory."""
    path = Path(path)
    if name is None:
        found = sorted(path.glob("*.content")) + sorted(path.glob("*.content.gz"))
        if not found:
            raise FileNotFoundError(f"no .content file in {path}")
        name = found[0].name.split(".")[0]
    content = _find(path / f"{name}.content")
    cites = _find(path / f"{name}.cites")
    return load_citation_dataset(content, cites, name=name, strict=strict)


def _fmt(v):
    return format(float(v), ".17g")


def write_citation_dataset(bundle: DatasetBundle, content_path, cites_path):
    if bundle.task != "node" or len(bundle.graphs) != 1:
        raise ValueError("citation format holds a single node-task graph")
    g = bundle.graph
    ids = bundle.node_ids or tuple(str(i) for i in range(g.num_nodes))
    names = bundle.class_names or tuple(str(c) for c in range(bundle.num_classes))
    with open(content_path, "w") as fh:
        for i in range(g.num_nodes):
            fh.write("\t".join([ids[i], *map(_fmt, g.features[i]),
                                names[g.node_labels[i]]]) + "\n")
    pairs, _ = g.edge_pairs(include_loops=True)
    with open(cites_path, "w") as fh:
        for u, v in pairs:
            fh.write(f"{ids[v]}\t{ids[u]}\n")


# -- TU graph-classification format ----------------------------------------

def _read_column(path, dtype=float):
    values = []
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(dtype(float(line)) if dtype is int else dtype(line))
            except ValueError:
                raise DatasetFormatError(f"{path}:{lineno}: bad value {line!r}") from None
    return np.array(values)


def _read_rows(path):
    rows = []
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(t) for t in line.split(",")])
            except ValueError:
                raise DatasetFormatError(f"{path}:{lineno}: bad row {line!r}") from None
    return rows


def _value_map(values):
    uniq = sorted(set(values.tolist()))
    return {v: i for i, v in enumerate(uniq)}, uniq


def _label_name(v):
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def load_tu_dataset(dir_path, name=None, bias=True) -> DatasetBundle:
    """Read the multi-file TU graph-classification layout.

    Expects ``<name>_A.txt`` (comma-separated 1-based global node ids),
    ``<name>_graph_indicator.txt`` and ``<name>_graph_labels.txt``, plus
    optional ``_node_labels.txt`` and ``_node_attributes.txt``.  Node
    attributes are used as features when present; otherwise each node gets
    a bias column (unless ``bias=False``).  Categorical node labels are
    appended one-hot.  Graph labels are numbered in sorted order.
    """
    dir_path = Path(dir_path)
    if name is None:
        found = sorted(dir_path.glob("*_A.txt")) + sorted(dir_path.glob("*_A.txt.gz"))
        if not found:
            raise FileNotFoundError(f"no *_A.txt file in {dir_path}")
        name = found[0].name.split("_A.txt")[0]
    a_path = _find(dir_path / f"{name}_A.txt")
    ind_path = _find(dir_path / f"{name}_graph_indicator.txt")
    gl_path = _find(dir_path / f"{name}_graph_labels.txt")

    indicator = _read_column(ind_path, int)
    graph_values = _read_column(gl_path, float)
    num_nodes = len(indicator)
    num_graphs = len(graph_values)
    if num_nodes == 0 or num_graphs == 0:
        raise DatasetFormatError(f"{dir_path}: empty dataset")
    if indicator.min() < 1 or indicator.max() > num_graphs:
        raise DatasetFormatError(
            f"{ind_path}: graph ids must lie in [1, {num_graphs}]"
        )
    if np.any(np.diff(indicator) < 0):
        raise DatasetFormatError(f"{ind_path}: nodes must be grouped by graph")
    counts = np.bincount(indicator - 1, minlength=num_graphs)
    if np.any(counts == 0):
        raise DatasetFormatError(f"{ind_path}: graph without nodes")
    offsets = np.concatenate([[0], np.cumsum(counts)])

    edges = np.array(_read_rows(a_path), dtype=np.int64).reshape(-1, 2) - 1
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        raise DatasetFormatError(f"{a_path}: edge references a node outside [1, {num_nodes}]")
    edge_graph = indicator[edges[:, 0]] - 1
    if np.any(edge_graph != indicator[edges[:, 1]] - 1):
        raise DatasetFormatError(f"{a_path}: edge joins nodes of different graphs")

    columns, paths = [], [a_path, ind_path, gl_path]
    attr_path = dir_path / f"{name}_node_attributes.txt"
    if attr_path.exists() or attr_path.with_name(attr_path.name + ".gz").exists():
        attr_path = _find(attr_path)
        paths.append(attr_path)
        attrs = np.array(_read_rows(attr_path))
        if attrs.shape[0] != num_nodes:
            raise DatasetFormatError(f"{attr_path}: expected {num_nodes} rows")
        columns.append(attrs.reshape(num_nodes, -1))
    elif bias:
        columns.append(np.ones((num_nodes, 1)))
    node_label_values = None
    nl_path = dir_path / f"{name}_node_labels.txt"
    if nl_path.exists() or nl_path.with_name(nl_path.name + ".gz").exists():
        nl_path = _find(nl_path)
        paths.append(nl_path)
        node_values = _read_column(nl_path, float)
        if len(node_values) != num_nodes:
            raise DatasetFormatError(f"{nl_path}: expected {num_nodes} labels")
        vmap, node_label_values = _value_map(node_values)
        onehot = np.zeros((num_nodes, len(vmap)))
        onehot[np.arange(num_nodes), [vmap[v] for v in node_values.tolist()]] = 1.0
        columns.append(onehot)
    features = np.hstack(columns) if columns else np.zeros((num_nodes, 0))

    order = np.argsort(edge_graph, kind="stable")
    edges, edge_graph = edges[order], edge_graph[order]
    bounds = np.searchsorted(edge_graph, np.arange(num_graphs + 1))
    graphs = []
    for t in range(num_graphs):
        lo, hi = offsets[t], offsets[t + 1]
        local = edges[bounds[t]:bounds[t + 1]] - lo
        local = np.unique(np.sort(local, axis=1), axis=0) if len(local) else local
        graphs.append(Graph.from_edges(hi - lo, local, features=features[lo:hi]))

    gmap, graph_label_values = _value_map(graph_values)
    labels = np.array([gmap[v] for v in graph_values.tolist()], dtype=np.int64)
    info = {
        "num_graphs": num_graphs,
        "total_nodes": num_nodes,
        "total_edges": int(sum(g.num_edges for g in graphs)),
        "checksum": _checksum(*paths),
    }
    if node_label_values is not None:
        info["node_label_values"] = [_label_name(v) for v in node_label_values]
    return DatasetBundle(
        name=name,
        task="graph",
        graphs=tuple(graphs),
        num_classes=len(gmap),
        class_names=tuple(_label_name(v) for v in graph_label_values),
        graph_labels=labels,
        info=info,
    )


def write_tu_dataset(bundle: DatasetBundle, dir_path, name=None):
    """Write a graph-task bundle in TU layout, features as node attributes."""
    if bundle.task != "graph":
        raise ValueError("TU format holds graph-task bundles")
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    name = name or bundle.name
    names = bundle.class_names or tuple(str(c) for c in range(bundle.num_classes))
    offset = 0
    with open(dir_path / f"{name}_A.txt", "w") as fa, \
            open(dir_path / f"{name}_graph_indicator.txt", "w") as fi, \
            open(dir_path / f"{name}_node_attributes.txt", "w") as fx:
        for t, g in enumerate(bundle.graphs, 1):
            for u, v in g.edges:
                fa.write(f"{u + offset + 1}, {v + offset + 1}\n")
            for row in g.features:
                fi.write(f"{t}\n")
                fx.write(", ".join(map(_fmt, row)) + "\n")
            offset += g.num_nodes
    with open(dir_path / f"{name}_graph_labels.txt", "w") as fl:
        for lab in bundle.graph_labels:
            fl.write(f"{names[lab]}\n")


# -- manifest ---------------------------------------------------------------

def manifest(bundle: DatasetBundle) -> dict:
    return {
        "schema_version": MANIFEST_VERSION,
        "name": bundle.name,
        "task": bundle.task,
        "num_graphs": len(bundle.graphs),
        "num_nodes": int(sum(g.num_nodes for g in bundle.graphs)),
        "num_edges": int(sum(g.num_edges for g in bundle.graphs)),
        "num_features": bundle.num_features,
        "num_classes": bundle.num_classes,
        "class_map": {name: i for i, name in enumerate(bundle.class_names)},
        "population": bundle.population,
        "info": bundle.info,
    }


def write_manifest(bundle: DatasetBundle, path):
    Path(path).write_text(json.dumps(manifest(bundle), indent=2, sort_keys=True) + "\n")


# -- splits -----------------------------------------------------------------

SPLIT_PROTOCOLS = ("thirds", "learning-curve")


@dataclass(frozen=True, eq=False)
class SplitSpec:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int
    protocol: str


def make_splits(population, protocol="thirds", seed=0, fraction=1.0) -> SplitSpec:
    """Random disjoint train/validation/test index sets.

    ``thirds``: three sets of equal size (within one).  ``learning-curve``:
    10% validation, 10% test, and ``fraction`` of the remaining entities for
    training.  ``node-thirds`` and ``graph-thirds`` are accepted as aliases.
    """
    if protocol in ("node-thirds", "graph-thirds"):
        protocol = "thirds"
    if protocol not in SPLIT_PROTOCOLS:
        raise ValueError(f"unknown split protocol {protocol!r}")
    if population < 3:
        raise ValueError("need at least 3 entities to split")
    perm = np.random.default_rng(seed).permutation(population)
    if protocol == "thirds":
        train, val, test = np.array_split(perm, 3)
    else:
        if not 0.0 < fraction <= 1.0:
            raise ValueError("fraction must lie in (0, 1]")
        tenth = max(1, int(round(0.1 * population)))
        rest = population - 2 * tenth
        n_train = max(1, int(round(fraction * rest)))
        val, test = perm[:tenth], perm[tenth:2 * tenth]
        train = perm[2 * tenth:2 * tenth + n_train]
    return SplitSpec(np.sort(train), np.sort(val), np.sort(test), seed, protocol)


# -- synthetic graphs -------------------------------------------------------

SYNTHETIC_KINDS = ("two-cliques", "path", "random")


def generate_synthetic(kind, n, seed=0, p=None, noise=None) -> Graph:
    """Small deterministic graphs with a bias feature column.

    ``two-cliques`` joins cliques of sizes ``ceil(n/2)`` and ``floor(n/2)`` by a
    single bridge edge and labels nodes by clique.  With ``noise`` set, each
    node also gets its one-hot clique indicator plus Gaussian noise of that
    standard deviation as extra features.  ``random`` is an Erdos-Renyi graph
    with edge probability ``p``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    labels = None
    if kind == "path":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "two-cliques":
        a = (n + 1) // 2
        left, right = range(a), range(a, n)
        edges = [(i, j) for i in left for j in left if i < j]
        edges += [(i, j) for i in right for j in right if i < j]
        if n > a:
            edges.append((a - 1, a))
        labels = np.r_[np.zeros(a, dtype=np.int64), np.ones(n - a, dtype=np.int64)]
    elif kind == "random":
        if p is None or not 0.0 <= p <= 1.0:
            raise ValueError("random graphs need an edge probability p in [0, 1]")
        rng = np.random.default_rng(seed)
        iu = np.triu_indices(n, k=1)
        keep = rng.random(len(iu[0])) < p
        edges = np.stack([iu[0][keep], iu[1][keep]], axis=1)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}; choose from {SYNTHETIC_KINDS}")
    features = np.ones((n, 1))
    if noise is not None:
        if labels is None:
            raise ValueError("noisy label features need a labeled generator")
        rng = np.random.default_rng([seed, 7])
        signal = np.eye(2)[labels] + rng.normal(0.0, noise, size=(n, 2))
        features = np.hstack([features, signal])
    return Graph.from_edges(n, np.asarray(edges, dtype=np.int64).reshape(-1, 2),
                            features=features, node_labels=labels)


def synthetic_bundle(kind, n, seed=0, p=None, noise=None) -> DatasetBundle:
    g = generate_synthetic(kind, n, seed, p, noise)
    if g.node_labels is None:
        raise ValueError(f"synthetic kind {kind!r} has no labels")
    name = f"synthetic-{kind}-{n}" + ("" if noise is None else f"-noise{noise:g}")
    return DatasetBundle(name, "node", (g,), 2, ("0", "1"))
