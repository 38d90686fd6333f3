"""Categorical datasets, Bayesian-network specs, subsampling and blocking.

A dataset is an ``n x p`` matrix of non-negative integer category codes.
Column ``c`` takes values in ``range(cardinalities[c])``. The domain
(column names and cardinalities) is treated as public; only rows are
private.
"""

from __future__ import annotations

import csv
import graphlib
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rng import derive_rng

BUILTIN_NETWORKS = ("earthquake", "cancer", "asia", "survey")

# Key spaces larger than this fall back to np.unique for block coding.
_DENSE_KEY_LIMIT = 1 << 20


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    columns: tuple[str, ...]
    rows: np.ndarray
    cardinalities: tuple[int, ...]

    def __post_init__(self):
        rows = np.asarray(self.rows)
        if rows.ndim != 2:
            raise DataError(f"rows must be a 2-D matrix, got shape {rows.shape}")
        n, p = rows.shape
        if n < 1:
            raise DataError("dataset must contain at least one row")
        if p != len(self.columns) or p != len(self.cardinalities):
            raise DataError(
                f"{p} data columns but {len(self.columns)} names and "
                f"{len(self.cardinalities)} cardinalities"
            )
        if len(set(self.columns)) != p:
            raise DataError("duplicate column names")
        if not np.issubdtype(rows.dtype, np.integer):
            raise DataError(f"rows must hold integer codes, got dtype {rows.dtype}")
        rows = np.array(rows, dtype=np.int64, order="F")
        cards = np.asarray(self.cardinalities, dtype=np.int64)
        if np.any(cards < 1):
            raise DataError("cardinalities must be positive")
        bad = (rows < 0) | (rows >= cards[None, :])
        if bad.any():
            r, c = map(int, np.argwhere(bad)[0])
            raise DataError(
                f"row {r}, column {self.columns[c]!r}: value {rows[r, c]} outside "
                f"[0, {self.cardinalities[c]})"
            )
        object.__setattr__(self, "columns", tuple(str(c) for c in self.columns))
        object.__setattr__(self, "cardinalities", tuple(int(c) for c in self.cardinalities))
        object.__setattr__(self, "rows", _readonly(rows))

    @classmethod
    def from_array(
        cls,
        rows: Sequence[Sequence[int]] | np.ndarray,
        columns: Sequence[str] | None = None,
        cardinalities: Sequence[int] | None = None,
    ) -> "Dataset":
        arr = np.asarray(rows)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise DataError(f"rows must be a 2-D matrix, got shape {arr.shape}")
        if columns is None:
            columns = [f"X{c}" for c in range(arr.shape[1])]
        if cardinalities is None:
            cardinalities = [int(arr[:, c].max()) + 1 if arr.size else 1 for c in range(arr.shape[1])]
        return cls(tuple(columns), arr, tuple(cardinalities))

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]

    def column_index(self, name: str | int) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < self.p:
                raise IndexError(f"column index {name} out of range")
            return int(name)
        try:
            return self.columns.index(name)
        except ValueError:
            raise KeyError(f"no column named {name!r}") from None

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns))
        buf.write("\n")
        for row in self.rows.tolist():
            buf.write(",".join(map(str, row)))
            buf.write("\n")
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class SubsampledDataset:
    """``m`` distinct rows of ``parent`` drawn without replacement."""

    parent: Dataset
    indices: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size < 1:
            raise ValueError("indices must be a non-empty 1-D array")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= self.parent.n:
            raise ValueError("indices out of range for the parent dataset")
        object.__setattr__(self, "indices", _readonly(idx.copy()))

    @property
    def m(self) -> int:
        return self.indices.size

    @property
    def n(self) -> int:
        return self.indices.size

    @property
    def p(self) -> int:
        return self.parent.p

    @property
    def columns(self) -> tuple[str, ...]:
        return self.parent.columns

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return self.parent.cardinalities

    @property
    def rows(self) -> np.ndarray:
        if self.m == self.parent.n:
            return self.parent.rows
        return _readonly(self.parent.rows[self.indices])

    def column_index(self, name: str | int) -> int:
        return self.parent.column_index(name)

    def to_dataset(self) -> Dataset:
        return Dataset(self.parent.columns, self.rows, self.parent.cardinalities)


def load_csv(path: str | Path) -> Dataset:
    """Read a header-plus-integer-codes CSV file.

    Cardinalities are inferred as ``1 + max`` per column. LF and CRLF line
    endings are both accepted.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        return parse_csv(fh, source=str(path))


def parse_csv(lines: Iterable[str], source: str = "<csv>") -> Dataset:
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{source}: empty file, expected a header row") from None
    header = [h.strip() for h in header]
    if not header or any(h == "" for h in header):
        raise DataError(f"{source}: header has empty column names")
    p = len(header)
    data: list[list[int]] = []
    for lineno, raw in enumerate(reader, start=2):
        if not raw or (len(raw) == 1 and raw[0].strip() == ""):
            continue
        if len(raw) != p:
            raise DataError(f"{source}: line {lineno} has {len(raw)} fields, expected {p}")
        parsed = []
        for col, cell in zip(header, raw):
            cell = cell.strip()
            try:
                value = int(cell)
            except ValueError:
                raise DataError(
                    f"{source}: line {lineno}, column {col!r}: cannot parse {cell!r} as an integer"
                ) from None
            if value < 0:
                raise DataError(
                    f"{source}: line {lineno}, column {col!r}: negative category code {value}"
                )
            parsed.append(value)
        data.append(parsed)
    if not data:
        raise DataError(f"{source}: no data rows")
    arr = np.array(data, dtype=np.int64)
    cards = tuple(int(v) + 1 for v in arr.max(axis=0))
    return Dataset(tuple(header), arr, cards)


def write_csv(d: Dataset, path: str | Path) -> None:
    Path(path).write_text(d.to_csv(), encoding="utf-8")


# --------------------------------------------------------------------------
# Bayesian networks
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Variable:
    """A discrete node. ``cpt[r, v] = P(node = v | parent assignment r)``.

    Parent assignments are enumerated lexicographically with the last
    parent varying fastest.
    """

    name: str
    cardinality: int
    parents: tuple[str, ...]
    cpt: np.ndarray


@dataclass(frozen=True, eq=False)
class BayesNetSpec:
    variables: tuple[Variable, ...]
    description: str = ""
    order: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise DataError("duplicate variable names in network spec")
        index = {name: i for i, name in enumerate(names)}
        cards = {v.name: v.cardinality for v in self.variables}
        fixed = []
        for v in self.variables:
            if v.cardinality < 1:
                raise DataError(f"variable {v.name!r}: cardinality must be positive")
            for par in v.parents:
                if par not in index:
                    raise DataError(f"variable {v.name!r}: unknown parent {par!r}")
                if par == v.name:
                    raise DataError(f"variable {v.name!r} lists itself as a parent")
            if len(set(v.parents)) != len(v.parents):
                raise DataError(f"variable {v.name!r}: repeated parent")
            n_rows = math.prod(cards[par] for par in v.parents)
            cpt = np.asarray(v.cpt, dtype=np.float64)
            if cpt.size != n_rows * v.cardinality:
                raise DataError(
                    f"variable {v.name!r}: cpt has {cpt.size} entries, expected "
                    f"{n_rows} rows x {v.cardinality}"
                )
            cpt = cpt.reshape(n_rows, v.cardinality)
            if np.any(cpt < 0) or np.any(np.abs(cpt.sum(axis=1) - 1.0) > 1e-9):
                raise DataError(f"variable {v.name!r}: cpt rows must be distributions")
            fixed.append(Variable(v.name, int(v.cardinality), tuple(v.parents), _readonly(cpt)))
        object.__setattr__(self, "variables", tuple(fixed))

        sorter = graphlib.TopologicalSorter()
        for v in self.variables:
            sorter.add(v.name, *v.parents)
        try:
            topo = list(sorter.static_order())
        except graphlib.CycleError as exc:
            raise DataError(f"network has a directed cycle: {exc.args[1]}") from None
        object.__setattr__(self, "order", tuple(index[name] for name in topo))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(v.cardinality for v in self.variables)

    @property
    def edges(self) -> tuple[tuple[str, str], ...]:
        return tuple((par, v.name) for v in self.variables for par in v.parents)

    @classmethod
    def from_dict(cls, doc: dict) -> "BayesNetSpec":
        try:
            variables = tuple(
                Variable(
                    name=str(item["name"]),
                    cardinality=int(item["cardinality"]),
                    parents=tuple(item.get("parents", ())),
                    cpt=np.asarray(item["cpt"], dtype=np.float64),
                )
                for item in doc["variables"]
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed network spec: {exc}") from None
        return cls(variables, str(doc.get("description", "")))

    def to_dict(self) -> dict:
        out: dict = {}
        if self.description:
            out["description"] = self.description
        out["variables"] = [
            {
                "name": v.name,
                "cardinality": v.cardinality,
                "parents": list(v.parents),
                "cpt": v.cpt.ravel().tolist(),
            }
            for v in self.variables
        ]
        return out


def load_bayesnet(path: str | Path) -> BayesNetSpec:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None
    return BayesNetSpec.from_dict(doc)


def builtin_network(name: str) -> BayesNetSpec:
    """Load one of the bundled benchmark networks by name."""
    key = name.lower()
    if key not in BUILTIN_NETWORKS:
        raise KeyError(f"unknown network {name!r}; choose from {', '.join(BUILTIN_NETWORKS)}")
    text = resources.files("privpc.networks").joinpath(f"{key}.json").read_text(encoding="utf-8")
    return BayesNetSpec.from_dict(json.loads(text))


def resolve_network(name_or_path: str | Path) -> BayesNetSpec:
    if str(name_or_path).lower() in BUILTIN_NETWORKS:
        return builtin_network(str(name_or_path))
    return load_bayesnet(name_or_path)


def random_network(
    p: int,
    seed: int,
    max_parents: int = 2,
    max_cardinality: int = 3,
    edge_prob: float = 0.5,
    concentration: float = 0.5,
) -> BayesNetSpec:
    """Random DAG over ``X0..X{p-1}`` (parents precede children) with Dirichlet CPTs."""
    rng = derive_rng(seed, "random-network")
    names = [f"X{i}" for i in range(p)]
    cards = rng.integers(2, max_cardinality + 1, size=p)
    variables = []
    for i in range(p):
        cands = [j for j in range(i) if rng.random() < edge_prob]
        if len(cands) > max_parents:
            cands = sorted(rng.choice(cands, size=max_parents, replace=False).tolist())
        parents = tuple(names[j] for j in cands)
        rows = math.prod(int(cards[j]) for j in cands)
        cpt = rng.dirichlet(np.full(int(cards[i]), concentration), size=rows)
        # renormalise in float64 so rows pass the 1e-9 check
        cpt = cpt / cpt.sum(axis=1, keepdims=True)
        variables.append(Variable(names[i], int(cards[i]), parents, cpt))
    return BayesNetSpec(tuple(variables), f"random network p={p} seed={seed}")


def forward_sample(spec: BayesNetSpec, n: int, seed: int) -> Dataset:
    """Ancestral sampling of ``n`` rows, deterministic in ``seed``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = derive_rng(seed, "forward-sample")
    index = {v.name: i for i, v in enumerate(spec.variables)}
    out = np.zeros((n, len(spec.variables)), dtype=np.int64)
    for vi in spec.order:
        var = spec.variables[vi]
        parent_row = np.zeros(n, dtype=np.int64)
        for par in var.parents:
            pi = index[par]
            parent_row = parent_row * spec.variables[pi].cardinality + out[:, pi]
        cum = np.cumsum(var.cpt, axis=1)
        cum[:, -1] = 1.0
        u = rng.random(n)
        # value = number of cumulative thresholds strictly below u
        out[:, vi] = (u[:, None] >= cum[parent_row][:, :-1]).sum(axis=1) if var.cardinality > 1 else 0
    return Dataset(spec.names, out, spec.cardinalities)


# --------------------------------------------------------------------------
# Subsampling
# --------------------------------------------------------------------------


def subsample_indices(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    if not 1 <= m <= n:
        raise ValueError(f"subsample size m={m} must satisfy 1 <= m <= n={n}")
    if m == n:
        return np.arange(n, dtype=np.int64)
    idx = rng.choice(n, size=m, replace=False)
    idx.sort()
    return idx.astype(np.int64, copy=False)


def subsample(d: Dataset, m: int, seed: int) -> SubsampledDataset:
    """Uniform sample of ``m`` rows without replacement."""
    if not 1 <= m <= d.n:
        raise ValueError(f"subsample size m={m} must satisfy 1 <= m <= n={d.n}")
    idx = subsample_indices(d.n, m, derive_rng(seed, "subsample"))
    return SubsampledDataset(d, idx, seed)


# --------------------------------------------------------------------------
# Blocks of the conditioning set
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Blocks:
    """Paired value sequences, one block per retained joint value of S.

    ``a[i]`` and ``b[i]`` hold the two test columns for the rows in block
    ``i``, in original row order. ``levels`` are the cardinalities of the
    two columns when known, which lets statistics use dense count tables.
    """

    a: tuple[np.ndarray, ...]
    b: tuple[np.ndarray, ...]
    rows_dropped: int = 0
    levels: tuple[int, int] | None = None

    def __post_init__(self):
        if len(self.a) != len(self.b):
            raise ValueError("a and b must have the same number of blocks")
        for ai, bi in zip(self.a, self.b):
            if len(ai) != len(bi):
                raise ValueError("paired sequences in a block must have equal length")

    @classmethod
    def single(cls, a: Sequence, b: Sequence) -> "Blocks":
        return cls((np.asarray(a),), (np.asarray(b),))

    @property
    def k(self) -> int:
        return len(self.a)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(ai) for ai in self.a)

    @property
    def rows_used(self) -> int:
        return sum(self.sizes)

    @property
    def empty(self) -> bool:
        return self.k == 0

    def tables(self) -> list[np.ndarray]:
        """Per-block contingency tables of (a, b) with rows/cols in ascending value order."""
        out = []
        for ai, bi in zip(self.a, self.b):
            ai = np.asarray(ai)
            bi = np.asarray(bi)
            if self.levels is not None:
                ra, rb = self.levels
                ca, cb = ai.astype(np.int64), bi.astype(np.int64)
            else:
                ua, ca = np.unique(ai, return_inverse=True)
                ub, cb = np.unique(bi, return_inverse=True)
                ra, rb = ua.size, ub.size
            out.append(np.bincount(ca * rb + cb, minlength=ra * rb).reshape(ra, rb))
        return out


def _check_test_columns(p: int, i: int, j: int, S: Sequence[int], min_block_size: int) -> None:
    if i == j:
        raise ValueError("test columns i and j must differ")
    if i in S or j in S:
        raise ValueError("conditioning set must not contain i or j")
    if len(set(S)) != len(S):
        raise ValueError("conditioning set has repeated columns")
    for c in (i, j, *S):
        if not 0 <= c < p:
            raise IndexError(f"column {c} out of range")
    if min_block_size < 2:
        raise ValueError("min_block_size must be at least 2")


def _block_codes(rows: np.ndarray, S: Sequence[int], cards: Sequence[int]) -> tuple[np.ndarray, int]:
    """Code each row by the joint value of ``S``; codes ascend lexicographically."""
    n = rows.shape[0]
    if not S:
        return np.zeros(n, dtype=np.int64), 1
    space = math.prod(int(cards[c]) for c in S)
    if space <= _DENSE_KEY_LIMIT:
        key = np.zeros(n, dtype=np.int64)
        for c in S:
            key = key * int(cards[c]) + rows[:, c]
        return key, space
    _, inverse = np.unique(rows[:, list(S)], axis=0, return_inverse=True)
    inverse = inverse.ravel().astype(np.int64)
    return inverse, int(inverse.max()) + 1


def partition_blocks(
    d: Dataset | SubsampledDataset,
    i: int | str,
    j: int | str,
    S: Iterable[int | str] = (),
    min_block_size: int = 5,
) -> Blocks:
    """Group rows by the joint value of ``S`` and drop blocks below the floor."""
    i = d.column_index(i)
    j = d.column_index(j)
    S = tuple(d.column_index(c) for c in S)
    _check_test_columns(d.p, i, j, S, min_block_size)
    rows = d.rows
    codes, _ = _block_codes(rows, S, d.cardinalities)
    order = np.argsort(codes, kind="stable")
    sorted_codes = codes[order]
    cuts = np.flatnonzero(np.diff(sorted_codes)) + 1
    groups = np.split(order, cuts)
    a_blocks, b_blocks, dropped = [], [], 0
    col_a, col_b = rows[:, i], rows[:, j]
    for g in groups:
        if g.size < min_block_size:
            dropped += g.size
            continue
        a_blocks.append(_readonly(col_a[g]))
        b_blocks.append(_readonly(col_b[g]))
    return Blocks(
        tuple(a_blocks),
        tuple(b_blocks),
        rows_dropped=dropped,
        levels=(d.cardinalities[i], d.cardinalities[j]),
    )


def conditional_tables(
    rows: np.ndarray,
    cards: Sequence[int],
    i: int,
    j: int,
    S: Sequence[int],
    min_block_size: int,
) -> np.ndarray:
    """Stacked ``(k, card_i, card_j)`` contingency tables of the retained blocks.

    Equivalent to ``partition_blocks(...).tables()`` but a single bincount,
    which is what the discovery engines use on large data.
    """
    ra, rb = int(cards[i]), int(cards[j])
    codes, space = _block_codes(rows, S, cards)
    flat = (codes * ra + rows[:, i]) * rb + rows[:, j]
    counts = np.bincount(flat, minlength=space * ra * rb).reshape(space, ra, rb)
    sizes = counts.sum(axis=(1, 2))
    return counts[sizes >= min_block_size]
