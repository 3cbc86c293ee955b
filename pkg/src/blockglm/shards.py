"""Feature-major data layout for one worker's block of columns."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError


@dataclass
class FeatureShard:
    """The columns of one node's feature block, plus the replicated labels.

    Columns are stored CSC-style: ``feature_ids[k]`` is the global id of local
    column k, whose entries live in ``rows[indptr[k]:indptr[k+1]]`` /
    ``vals[indptr[k]:indptr[k+1]]`` with strictly increasing example indices.
    """

    node_id: int
    num_nodes: int
    n: int
    num_features_global: int
    seed: int
    labels: np.ndarray
    feature_ids: np.ndarray  # global ids, ascending
    indptr: np.ndarray
    rows: np.ndarray
    vals: np.ndarray

    @property
    def num_local_features(self) -> int:
        return len(self.feature_ids)

    def validate(self) -> None:
        if len(self.labels) != self.n:
            raise DataFormatError("label vector length does not match n")
        F = self.num_local_features
        if len(self.indptr) != F + 1 or self.indptr[0] != 0:
            raise DataFormatError("bad column index pointer")
        if F > 1 and not np.all(np.diff(self.feature_ids) > 0):
            raise DataFormatError("feature ids must be strictly ascending")
        if np.any(self.feature_ids < 0) or np.any(
            self.feature_ids >= self.num_features_global
        ):
            raise DataFormatError("feature id out of range")
        if len(self.rows) != self.indptr[-1] or len(self.vals) != self.indptr[-1]:
            raise DataFormatError("entry arrays do not match index pointer")
        for k in range(F):
            r = self.rows[self.indptr[k] : self.indptr[k + 1]]
            if len(r) and (r[0] < 0 or r[-1] >= self.n):
                raise DataFormatError("example index out of range")
            if len(r) > 1 and not np.all(np.diff(r) > 0):
                raise DataFormatError("example indices must be strictly increasing")
        if not np.all(np.isfinite(self.vals)) or np.any(self.vals == 0.0):
            raise DataFormatError("stored values must be finite and nonzero")

    def column(self, local_j: int) -> tuple[np.ndarray, np.ndarray]:
        sl = slice(int(self.indptr[local_j]), int(self.indptr[local_j + 1]))
        return self.rows[sl], self.vals[sl]

    def margin_product(self, beta_local: np.ndarray) -> np.ndarray:
        """Dense recomputation of X^m @ beta_local (oracle for tests)."""
        out = np.zeros(self.n)
        for k in range(self.num_local_features):
            r, v = self.column(k)
            out[r] += beta_local[k] * v
        return out


def shard_from_columns(
    node_id: int,
    num_nodes: int,
    n: int,
    num_features_global: int,
    seed: int,
    labels: np.ndarray,
    columns: list[tuple[int, np.ndarray, np.ndarray]],
) -> FeatureShard:
    """Assemble a shard from (global feature id, row indices, values) triples."""
    columns = sorted(columns, key=lambda c: c[0])
    feature_ids = np.asarray([c[0] for c in columns], dtype=np.int64)
    counts = np.asarray([len(c[1]) for c in columns], dtype=np.int64)
    indptr = np.zeros(len(columns) + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    if columns:
        rows = np.concatenate([np.asarray(c[1], dtype=np.int64) for c in columns])
        vals = np.concatenate([np.asarray(c[2], dtype=np.float64) for c in columns])
    else:
        rows = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0, dtype=np.float64)
    shard = FeatureShard(
        node_id=node_id,
        num_nodes=num_nodes,
        n=n,
        num_features_global=num_features_global,
        seed=seed,
        labels=np.asarray(labels, dtype=np.float64),
        feature_ids=feature_ids,
        indptr=indptr,
        rows=rows,
        vals=vals,
    )
    shard.validate()
    return shard


@dataclass
class BlockDelta:
    """Result of one block solve.

    ``quad_form`` holds sum_i w_i d_i^2 + nu * ||delta_beta||^2, i.e. the block
    quadratic term before the trust-region multiplier is applied.
    """

    delta_beta: np.ndarray  # dense over local features
    local_margin_delta: np.ndarray  # X^m @ delta_beta, length n
    quad_form: float


@dataclass
class BlockCursor:
    """Position in the fixed cyclic visit order; persists across iterations."""

    next_index: int = 0
    passes_completed_this_iteration: int = 0
    visited_this_iteration: int = 0

    total_passes: int = field(default=0)

    def start_iteration(self) -> None:
        self.passes_completed_this_iteration = 0
        self.visited_this_iteration = 0
