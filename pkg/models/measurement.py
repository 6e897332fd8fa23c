"""
Sparse binary measurement matrices and the noisy linear measurement y = Phi x + w
"""

import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.special import comb

from config import Config
from models.signal_model import SignalInstance
from utils.errors import ConfigError, DimensionError, MatrixConstructionError, ResultIOError

logger = logging.getLogger(__name__)


class MatrixPolicy(Enum):
    """Whether Monte Carlo trials draw a new matrix or share one"""
    FRESH = "fresh"
    FIXED = "fixed"


@dataclass(frozen=True, eq=False)
class SparseBinaryMatrix:
    """0/1 matrix stored column-major as sorted row-index tuples"""
    n_rows: int
    n_cols: int
    column_weight: int
    column_supports: Tuple[Tuple[int, ...], ...]
    seed: Optional[int] = None

    def __post_init__(self):
        supports = tuple(tuple(sorted(int(r) for r in rows)) for rows in self.column_supports)
        object.__setattr__(self, "column_supports", supports)

        if len(supports) != self.n_cols:
            raise DimensionError(f"expected {self.n_cols} columns, got {len(supports)}")
        for i, rows in enumerate(supports):
            if len(set(rows)) != self.column_weight or len(rows) != self.column_weight:
                raise ConfigError(f"column {i} has {len(set(rows))} distinct rows, expected {self.column_weight}")
            if rows[0] < 0 or rows[-1] >= self.n_rows:
                raise DimensionError(f"column {i} has a row index outside [0, {self.n_rows})")

        if self.n_rows >= self.n_cols:
            logger.warning(f"M={self.n_rows} >= N={self.n_cols}: the system is not underdetermined")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_rows, self.n_cols

    @property
    def n_edges(self) -> int:
        return self.n_cols * self.column_weight

    @cached_property
    def edge_rows(self) -> np.ndarray:
        """Row of edge e = i * L + l (column-major edge order)"""
        rows = np.array(self.column_supports, dtype=np.int64).reshape(-1)
        rows.setflags(write=False)
        return rows

    @cached_property
    def row_supports(self) -> List[List[int]]:
        """Column indices per row"""
        rows: List[List[int]] = [[] for _ in range(self.n_rows)]
        for i, support in enumerate(self.column_supports):
            for j in support:
                rows[j].append(i)
        return rows

    @cached_property
    def row_edges(self) -> List[np.ndarray]:
        """Edge indices per row, in column order"""
        edges: List[List[int]] = [[] for _ in range(self.n_rows)]
        for e, j in enumerate(self.edge_rows):
            edges[int(j)].append(e)
        return [np.array(e, dtype=np.int64) for e in edges]

    @cached_property
    def row_weights(self) -> np.ndarray:
        return np.bincount(self.edge_rows, minlength=self.n_rows)

    def to_sparse(self) -> sparse.csc_matrix:
        data = np.ones(self.n_edges)
        cols = np.repeat(np.arange(self.n_cols), self.column_weight)
        return sparse.csc_matrix((data, (self.edge_rows, cols)), shape=self.shape)

    @cached_property
    def girth(self) -> float:
        return compute_girth(self)


@dataclass(eq=False)
class Measurement:
    y: np.ndarray
    sigma_w: float

    @property
    def m(self) -> int:
        return len(self.y)


def _max_columns(m: int, l: int) -> float:
    """Upper bound on 4-cycle-free columns: each column consumes C(L, 2) row pairs"""
    pairs_per_column = comb(l, 2, exact=True)
    if pairs_per_column == 0:
        return float("inf")
    return comb(m, 2, exact=True) / pairs_per_column


def _place_columns(n: int, m: int, l: int, rng: np.random.Generator,
                   avoid_four_cycles: bool) -> Optional[List[Tuple[int, ...]]]:
    pair_used = np.zeros((m, m), dtype=bool) if avoid_four_cycles else None
    columns: List[Tuple[int, ...]] = []
    for _ in range(n):
        chosen: List[int] = []
        blocked = np.zeros(m, dtype=bool)
        for _ in range(l):
            allowed = np.flatnonzero(~blocked)
            if allowed.size == 0:
                return None
            row = int(rng.choice(allowed))
            chosen.append(row)
            blocked[row] = True
            if avoid_four_cycles:
                blocked |= pair_used[row]
        if avoid_four_cycles:
            index = np.array(chosen)
            pair_used[np.ix_(index, index)] = True
        columns.append(tuple(sorted(chosen)))
    return columns


def build_matrix(n: int, m: int, l: int, rng: np.random.Generator,
                 max_retries: int = Config.MATRIX_MAX_RETRIES,
                 avoid_four_cycles: bool = True, seed: Optional[int] = None) -> SparseBinaryMatrix:
    """Column weight L matrix by progressive random row placement.

    With avoid_four_cycles no two columns share two rows (girth >= 6). A dead
    end restarts the whole placement, up to max_retries times.
    """
    if not 1 <= l <= m:
        raise ConfigError(f"column weight must satisfy 1 <= L <= M, got L={l}, M={m}")
    if n < 1:
        raise ConfigError(f"N must be positive, got {n}")
    if avoid_four_cycles and n > _max_columns(m, l):
        raise MatrixConstructionError(
            f"{n} columns of weight {l} cannot be 4-cycle free with M={m} rows "
            f"(at most {int(_max_columns(m, l))} columns share no row pair)"
        )

    for attempt in range(1, max_retries + 1):
        columns = _place_columns(n, m, l, rng, avoid_four_cycles)
        if columns is not None:
            logger.info(f"Built {m}x{n} matrix with column weight {l} (attempt {attempt})")
            return SparseBinaryMatrix(m, n, l, tuple(columns), seed)
        logger.debug(f"Placement attempt {attempt} hit a dead end")

    raise MatrixConstructionError(
        f"no 4-cycle-free placement of {n} weight-{l} columns in {m} rows after {max_retries} attempts"
    )


def build_tree_matrix(n: int, l: int, rng: np.random.Generator) -> SparseBinaryMatrix:
    """Acyclic bipartite graph: each new column shares exactly one row with earlier ones"""
    if n < 1 or l < 1:
        raise ConfigError(f"N and L must be positive, got N={n}, L={l}")

    m = l + (n - 1) * (l - 1)
    columns = [tuple(range(l))]
    next_row = l
    for _ in range(1, n):
        anchor = int(rng.integers(next_row))
        fresh = tuple(range(next_row, next_row + l - 1))
        next_row += l - 1
        columns.append((anchor,) + fresh)
    return SparseBinaryMatrix(m, n, l, tuple(columns))


def girth_at_most(matrix: SparseBinaryMatrix, bound: int = 4) -> bool:
    """True iff the bipartite graph has a cycle of length 4 (two columns share two rows)"""
    if bound < 4:
        return False
    phi = matrix.to_sparse()
    overlap = (phi.T @ phi).tocoo()
    off_diagonal = overlap.row != overlap.col
    return bool(np.any(overlap.data[off_diagonal] >= 2))


def compute_girth(matrix: SparseBinaryMatrix) -> float:
    """Shortest cycle of the bipartite graph by BFS from every node; inf if acyclic"""
    n, m = matrix.n_cols, matrix.n_rows
    # variables 0..n-1, checks n..n+m-1
    adjacency: List[List[int]] = [[n + j for j in rows] for rows in matrix.column_supports]
    adjacency += [list(cols) for cols in matrix.row_supports]

    girth = float("inf")
    for start in range(n + m):
        dist = [-1] * (n + m)
        parent = [-1] * (n + m)
        dist[start] = 0
        queue = deque([start])
        while queue:
            u = queue.popleft()
            if 2 * dist[u] + 1 >= girth:
                break
            for v in adjacency[u]:
                if dist[v] == -1:
                    dist[v] = dist[u] + 1
                    parent[v] = u
                    queue.append(v)
                elif v != parent[u]:
                    girth = min(girth, dist[u] + dist[v] + 1)
        if girth == 4:
            break
    return girth


def measure(matrix: SparseBinaryMatrix, signal: SignalInstance, sigma_w: float,
            rng: np.random.Generator) -> Measurement:
    """y = Phi x0 + w with w ~ N(0, sigma_w^2 I)"""
    if signal.n != matrix.n_cols:
        raise DimensionError(f"signal has length {signal.n}, matrix has {matrix.n_cols} columns")
    if sigma_w < 0:
        raise ConfigError(f"sigma_w must be nonnegative, got {sigma_w}")

    y = matrix.to_sparse() @ signal.values
    if sigma_w > 0:
        y = y + rng.normal(0.0, sigma_w, size=matrix.n_rows)
    return Measurement(y=np.asarray(y, dtype=float), sigma_w=float(sigma_w))


def save_matrix(matrix: SparseBinaryMatrix, path) -> Path:
    """Text format: 'N M L seed' header, then the rows of each column on its own line"""
    path = Path(path)
    seed = -1 if matrix.seed is None else matrix.seed
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as handle:
            handle.write(f"{matrix.n_cols} {matrix.n_rows} {matrix.column_weight} {seed}\n")
            for rows in matrix.column_supports:
                handle.write(" ".join(str(r) for r in rows) + "\n")
    except OSError as e:
        logger.error(f"Failed to save matrix {path}: {e}")
        raise ResultIOError(path, str(e)) from e
    logger.info(f"Matrix saved: {path}")
    return path


def load_matrix(path) -> SparseBinaryMatrix:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
        n, m, l, seed = (int(v) for v in lines[0].split())
        columns: Sequence[Tuple[int, ...]] = [tuple(int(v) for v in line.split()) for line in lines[1:n + 1]]
    except (OSError, ValueError, IndexError) as e:
        logger.error(f"Failed to load matrix {path}: {e}")
        raise ResultIOError(path, str(e)) from e
    return SparseBinaryMatrix(m, n, l, tuple(columns), None if seed < 0 else seed)
