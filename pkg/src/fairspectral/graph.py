"""Graph container, ingestion, normalization, splits, and synthetic data.

A graph couples an undirected simple adjacency structure (CSR, both
directions stored) with node features, a binary sensitive attribute, binary
labels, and three disjoint node masks.  The sensitive attribute is also kept
as a feature column: models consume it like any other channel, and the
fairness metrics read it separately.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .sparse import CsrMatrix, csr_from_edges, is_symmetric

OPERATOR_MODES = ("sym", "raw")


class GraphFormatError(ValueError):
    """Malformed edge list or node table."""


class SplitError(ValueError):
    """A split cannot be formed, e.g. a class has no members."""


@dataclass(frozen=True)
class Graph:
    adjacency: CsrMatrix
    features: np.ndarray
    sensitive: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray = field(default=None)
    val_mask: np.ndarray = field(default=None)
    test_mask: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        n = self.adjacency.n
        object.__setattr__(self, "features", np.ascontiguousarray(self.features, dtype=np.float64))
        object.__setattr__(self, "sensitive", np.ascontiguousarray(self.sensitive, dtype=np.int64))
        object.__setattr__(self, "labels", np.ascontiguousarray(self.labels, dtype=np.int64))
        for name in ("train_mask", "val_mask", "test_mask"):
            m = getattr(self, name)
            if m is None:
                m = np.zeros(n, dtype=bool)
            object.__setattr__(self, name, np.ascontiguousarray(m, dtype=bool))
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError(f"features must be (n, d) with n={n}, got {self.features.shape}")
        if self.sensitive.shape != (n,) or self.labels.shape != (n,):
            raise ValueError("sensitive and labels must be length-n vectors")
        if not np.isin(self.sensitive, (0, 1)).all():
            raise ValueError("sensitive attribute must be binary")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be binary")
        for name in ("train_mask", "val_mask", "test_mask"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must be a length-n boolean mask")
        overlap = (
            (self.train_mask & self.val_mask)
            | (self.train_mask & self.test_mask)
            | (self.val_mask & self.test_mask)
        )
        if overlap.any():
            raise ValueError("train/val/test masks must be disjoint")
        diag = _diagonal_entries(self.adjacency)
        if np.any(diag != 0.0):
            raise ValueError("adjacency must not contain self loops")
        if self.adjacency.n <= 5000 and not is_symmetric(self.adjacency):
            raise ValueError("adjacency must be symmetric")
        for arr in (self.features, self.sensitive, self.labels, self.train_mask, self.val_mask, self.test_mask):
            arr.flags.writeable = False

    @property
    def n(self) -> int:
        return self.adjacency.n

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def edge_count(self) -> int:
        """Stored directed entries; an undirected edge counts twice."""
        return self.adjacency.nnz

    def with_splits(self, splits: "SplitMasks") -> "Graph":
        return replace(self, train_mask=splits.train, val_mask=splits.val, test_mask=splits.test)


@dataclass(frozen=True)
class NormalizedOperator:
    """A symmetric operator derived from an adjacency, tagged with its mode.

    mode "sym": D^{-1/2} (A + I) D^{-1/2} with D the degree of A + I; the
    spectrum lies in [-1, 1].  mode "raw": the adjacency itself.
    """

    matrix: CsrMatrix
    mode: str

    def __post_init__(self) -> None:
        if self.mode not in OPERATOR_MODES:
            raise ValueError(f"mode must be one of {OPERATOR_MODES}, got {self.mode!r}")

    @property
    def n(self) -> int:
        return self.matrix.n

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix.matvec(x)

    def matmat(self, x: np.ndarray) -> np.ndarray:
        return self.matrix.matmat(x)


@dataclass(frozen=True)
class SplitMasks:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def to_json(self) -> str:
        doc = {
            "train": np.flatnonzero(self.train).tolist(),
            "val": np.flatnonzero(self.val).tolist(),
            "test": np.flatnonzero(self.test).tolist(),
            "n": int(self.train.shape[0]),
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "SplitMasks":
        doc = json.loads(text)
        n = int(doc["n"])
        masks = []
        for name in ("train", "val", "test"):
            m = np.zeros(n, dtype=bool)
            m[np.asarray(doc[name], dtype=np.int64)] = True
            masks.append(m)
        return SplitMasks(*masks)


@dataclass(frozen=True)
class SbmConfig:
    """Two-block stochastic block model with a sensitive attribute.

    Nodes split into two equal communities.  Edges are Bernoulli(p_in)
    inside a community and Bernoulli(p_out) across.  The sensitive attribute
    agrees with the community with probability sensitive_homophily.  Labels
    follow a planted linear score on the feature noise plus a small sensitive
    term, and match that signal with probability label_bias.
    """

    n: int = 2000
    p_in: float = 0.01
    p_out: float = 0.001
    sensitive_homophily: float = 0.9
    label_bias: float = 0.9
    d: int = 8
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 4:
            raise ValueError("n must be at least 4")
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ValueError("need 0 <= p_out <= p_in <= 1")
        if not 0.5 <= self.sensitive_homophily <= 1.0:
            raise ValueError("sensitive_homophily must lie in [0.5, 1]")
        if not 0.5 <= self.label_bias <= 1.0:
            raise ValueError("label_bias must lie in [0.5, 1]")
        if self.d < 2:
            raise ValueError("d must be at least 2 (sensitive column plus noise)")
        if self.noise_sd <= 0.0:
            raise ValueError("noise_sd must be positive")


def _diagonal_entries(a: CsrMatrix) -> np.ndarray:
    rows = np.repeat(np.arange(a.n), np.diff(a.row_ptr))
    on_diag = rows == a.col_idx
    out = np.zeros(a.n)
    out[rows[on_diag]] = a.values[on_diag]
    return out


def load_graph(
    edge_list_path,
    node_table_path,
    sensitive_column: str,
    label_column: str,
) -> Graph:
    """Read a graph from an edge list and a node table.

    Edge list: one "u v" pair per line, '#' comments and blank lines skipped.
    Direction, duplicates, and self loops are normalized away; both
    directions of each surviving edge are stored.

    Node table: delimited text (comma or tab, auto-detected) with a header.
    Every column except the label column becomes a feature, the sensitive
    column included.  The sensitive column must be binary.  Labels must be
    non-negative integers; classes above 1 are collapsed to 1 so multi-class
    sources reduce to the binary task.
    """
    names, rows = _read_table(node_table_path)
    for col in (sensitive_column, label_column):
        if col not in names:
            raise GraphFormatError(f"node table has no column {col!r}")
    n = rows.shape[0]
    if n == 0:
        raise GraphFormatError("node table is empty")

    label_pos = names.index(label_column)
    sens_pos = names.index(sensitive_column)
    raw_labels = rows[:, label_pos]
    if np.any(raw_labels != np.round(raw_labels)) or np.any(raw_labels < 0):
        raise GraphFormatError("label column must contain non-negative integers")
    labels = np.minimum(raw_labels.astype(np.int64), 1)
    sensitive = rows[:, sens_pos]
    if not np.isin(sensitive, (0.0, 1.0)).all():
        raise GraphFormatError("sensitive column must be binary")
    feature_cols = [i for i in range(len(names)) if i != label_pos]
    features = rows[:, feature_cols]

    pairs = _read_edge_pairs(edge_list_path, n)
    adjacency = _pairs_to_adjacency(n, pairs)
    return Graph(adjacency, features, sensitive.astype(np.int64), labels)


def _read_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise GraphFormatError("node table is empty")
    delim = "," if "," in lines[0] else "\t"
    names = [c.strip() for c in lines[0].split(delim)]
    data = []
    for ln_no, ln in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in ln.split(delim)]
        if len(cells) != len(names):
            raise GraphFormatError(f"node table line {ln_no}: expected {len(names)} cells, got {len(cells)}")
        try:
            data.append([float(c) for c in cells])
        except ValueError as exc:
            raise GraphFormatError(f"node table line {ln_no}: non-numeric cell") from exc
    return names, np.asarray(data, dtype=np.float64)


def _read_edge_pairs(path, n: int) -> np.ndarray:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln_no, ln in enumerate(fh, start=1):
            body = ln.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 2:
                raise GraphFormatError(f"edge list line {ln_no}: expected two ids")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise GraphFormatError(f"edge list line {ln_no}: non-integer id") from exc
            if not (0 <= u < n and 0 <= v < n):
                raise GraphFormatError(f"edge list line {ln_no}: id out of range [0, {n})")
            if u == v:
                continue
            pairs.append((min(u, v), max(u, v)))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(np.asarray(pairs, dtype=np.int64), axis=0)


def _pairs_to_adjacency(n: int, pairs: np.ndarray) -> CsrMatrix:
    if pairs.shape[0] == 0:
        return CsrMatrix(n, np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0))
    rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
    return csr_from_edges(n, rows, cols, np.ones(rows.shape[0]))


def normalize(g: Graph, mode: str = "sym") -> NormalizedOperator:
    """Build the propagation operator for a graph.

    "raw" returns the stored adjacency unchanged (same buffers).  "sym"
    adds a self loop to every node and scales symmetrically by the degree,
    which keeps the spectrum inside [-1, 1].
    """
    if mode == "raw":
        return NormalizedOperator(g.adjacency, "raw")
    if mode != "sym":
        raise ValueError(f"mode must be one of {OPERATOR_MODES}, got {mode!r}")
    return NormalizedOperator(_sym_normalize(g.adjacency), "sym")


def _sym_normalize(a: CsrMatrix) -> CsrMatrix:
    n = a.n
    old_counts = np.diff(a.row_ptr)
    row_ptr = np.concatenate([[0], np.cumsum(old_counts + 1)])  # one loop per row
    total = int(row_ptr[-1])
    col_idx = np.empty(total, dtype=np.int64)
    values = np.empty(total)
    rows = np.repeat(np.arange(n), old_counts)
    # Destination of each old entry: rows are sorted, so the within-row rank
    # shifts by one for entries past the inserted diagonal.
    within = np.arange(a.nnz) - a.row_ptr[rows]
    dest = row_ptr[rows] + within + (a.col_idx > rows)
    col_idx[dest] = a.col_idx
    values[dest] = a.values
    diag_dest = row_ptr[:-1] + np.bincount(rows[a.col_idx < rows], minlength=n)
    col_idx[diag_dest] = np.arange(n)
    values[diag_dest] = 1.0
    degree = old_counts + 1.0  # A+I with unit weights
    inv_sqrt = 1.0 / np.sqrt(degree)
    out_rows = np.repeat(np.arange(n), old_counts + 1)
    values *= inv_sqrt[out_rows] * inv_sqrt[col_idx]
    return CsrMatrix(n, row_ptr, col_idx, values)


def make_splits(g: Graph, seed: int) -> SplitMasks:
    """Stratified node splits.

    Per class: 25% of nodes to validation and 25% to test (floored, so the
    class balance is preserved within one node), then the training set takes
    min(half the class, 500) nodes from the remainder.  Deterministic in
    (labels, seed); the graph structure plays no role.
    """
    rng = np.random.default_rng(seed)
    n = g.n
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    for cls in (0, 1):
        members = np.flatnonzero(g.labels == cls)
        if members.size == 0:
            raise SplitError(f"class {cls} has no members")
        perm = members[rng.permutation(members.size)]
        n_val = members.size // 4
        n_test = members.size // 4
        n_train = min(members.size // 2, 500)
        n_train = min(n_train, members.size - n_val - n_test)
        val[perm[:n_val]] = True
        test[perm[n_val : n_val + n_test]] = True
        train[perm[n_val + n_test : n_val + n_test + n_train]] = True
    return SplitMasks(train, val, test)


# Internal constants of the synthetic generator.
#
# Labels follow a merit signal planted on a fixed feature direction w.  The
# w-channel carries merit plus a sensitive-group shift of SBM_GROUP_SHIFT
# standard deviations, so an accurate predictor must cancel the shift
# against the sensitive column.  A model that keeps the raw sensitive
# column cancels exactly and stays near parity; a model that only sees
# propagated features works with a sensitive column smoothed toward its
# community average, so the per-node detail needed for the cancellation is
# gone and a systematic group offset survives into its predictions.
#
# The community offset moves the feature cloud along a direction orthogonal
# to w, so community membership is visible in the features without
# contaminating the merit channel or the labels.
SBM_GROUP_SHIFT = 1.2
SBM_BLOCK_FEATURE_SCALE = 1.0


def generate_sbm(cfg: SbmConfig) -> Graph:
    """Sample a two-block SBM graph with features, sensitive bits and labels.

    Deterministic in cfg.seed.  The first feature column is the sensitive
    attribute itself; the remaining d-1 columns are Gaussian noise shifted by
    a per-community offset.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    half = n // 2
    block = np.zeros(n, dtype=np.int64)
    block[half:] = 1

    pairs = _sample_block_edges(rng, n, half, cfg.p_in, cfg.p_out)
    adjacency = _pairs_to_adjacency(n, pairs)

    agree = rng.random(n) < cfg.sensitive_homophily
    sensitive = np.where(agree, block, 1 - block)

    d_noise = cfg.d - 1
    noise = rng.standard_normal((n, d_noise)) * cfg.noise_sd
    merit = rng.standard_normal(n)

    # Fixed unit directions: w carries the merit signal plus the sensitive
    # group shift, offset is the community shift, orthogonalized against w.
    w = rng.standard_normal(d_noise)
    w /= np.linalg.norm(w)
    offset = rng.standard_normal(d_noise)
    offset -= (offset @ w) * w
    nrm = np.linalg.norm(offset)
    if nrm > 0:
        offset /= nrm
    shift = SBM_BLOCK_FEATURE_SCALE * cfg.noise_sd * (2.0 * block - 1.0)
    confound = SBM_GROUP_SHIFT * (2.0 * sensitive - 1.0)
    noise_perp = noise - np.outer(noise @ w, w)
    features_noise = (noise_perp
                      + np.outer((merit + confound) * cfg.noise_sd, w)
                      + shift[:, None] * offset[None, :])

    planted = (merit > 0.0).astype(np.int64)
    keep = rng.random(n) < cfg.label_bias
    labels = np.where(keep, planted, 1 - planted)

    features = np.concatenate([sensitive[:, None].astype(np.float64), features_noise], axis=1)
    return Graph(adjacency, features, sensitive, labels)


def _sample_block_edges(
    rng: np.random.Generator, n: int, half: int, p_in: float, p_out: float, chunk: int = 512
) -> np.ndarray:
    """Bernoulli edges over the upper triangle, drawn row-chunk by row-chunk
    to bound memory at large n.  Probability depends only on whether the two
    endpoints share a community (first half vs second half)."""
    prob_row = np.empty(n)
    out_pairs = []
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        rows = np.arange(start, stop)
        draws = rng.random((stop - start, n))
        for local, i in enumerate(rows):
            prob_row[:] = p_out
            if i < half:
                prob_row[:half] = p_in
            else:
                prob_row[half:] = p_in
            hit = draws[local] < prob_row
            hit[: i + 1] = False  # upper triangle only
            cols = np.flatnonzero(hit)
            if cols.size:
                out_pairs.append(np.stack([np.full(cols.size, i, dtype=np.int64), cols], axis=1))
    if not out_pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(out_pairs, axis=0)
