"""Shared data model: dataset bundles, group structure, coefficient state.

All fitting algorithms operate on a list of ``DatasetBundle`` objects that
share the same covariates (p columns in identical order), a ``GroupStructure``
partitioning the covariates into K non-overlapping groups, and a
``CoefficientState`` that carries the p x M coefficient matrix together with
the per-group partition of datasets into equality classes (the commonality
bookkeeping).

Equality classes are maintained structurally during fitting: datasets that
receive identical joint increments keep exactly equal coefficient blocks, so
no floating-point comparison is ever needed on the hot path.
``partition_refresh`` recomputes the classes from element-wise comparison and
is used in tests to cross-check the incremental bookkeeping.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

# A partition of datasets {0..M-1} is stored canonically as a tuple of
# classes, each class a sorted tuple of dataset indices, classes ordered by
# their smallest member.
Partition = tuple[tuple[int, ...], ...]

ALGORITHMS = ("sboost", "int_sboost", "sep_sboost", "cd_sboost", "pool_sboost")
MODELS = ("lr", "aft")


class ParseError(ValueError):
    """Malformed input file (ragged rows, non-numeric cells, bad header)."""


class ValidationError(ValueError):
    """Structurally inconsistent problem (dimensions, groups, censoring)."""


class NumericError(RuntimeError):
    """Numeric failure: degenerate fits, failed calibration, bad splits."""


@dataclass(frozen=True)
class DatasetBundle:
    """One dataset: covariates, response, optional censoring indicators.

    Parameters
    ----------
    X : ndarray, shape (n, p)
        Covariate matrix (standardized at load time for file inputs).
    y : ndarray, shape (n,)
        Response; for survival data this is the observed log-time.
    delta : ndarray or None, shape (n,)
        Event indicator (1 = event, 0 = censored). Present for survival
        data only.
    id : int
        Dataset index.
    """

    X: np.ndarray
    y: np.ndarray
    delta: np.ndarray | None = None
    id: int = 0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.ndim != 2:
            raise ValidationError(f"dataset {self.id}: X must be 2-D")
        if y.shape != (X.shape[0],):
            raise ValidationError(
                f"dataset {self.id}: y has length {y.shape[0]}, X has {X.shape[0]} rows"
            )
        if X.shape[0] < 2:
            raise ValidationError(f"dataset {self.id}: needs at least 2 rows")
        if not np.isfinite(X).all() or not np.isfinite(y).all():
            raise ValidationError(f"dataset {self.id}: non-finite values")
        if self.delta is not None:
            d = np.asarray(self.delta, dtype=int)
            object.__setattr__(self, "delta", d)
            if d.shape != y.shape:
                raise ValidationError(f"dataset {self.id}: delta length mismatch")
            if not np.isin(d, (0, 1)).all():
                raise ValidationError(f"dataset {self.id}: delta must be 0/1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class GroupStructure:
    """Partition of the p covariates into K non-overlapping groups.

    ``assignment[s]`` is the 0-based group index of covariate s. Groups must
    be non-empty and cover all covariates.
    """

    assignment: np.ndarray
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=int)
        object.__setattr__(self, "assignment", a)
        if a.ndim != 1 or a.size == 0:
            raise ValidationError("group assignment must be a non-empty 1-D array")
        K = int(a.max()) + 1
        counts = np.bincount(a, minlength=K)
        if a.min() < 0 or (counts == 0).any():
            missing = np.nonzero(counts == 0)[0].tolist()
            raise ValidationError(f"empty or invalid groups: {missing}")

    @property
    def p(self) -> int:
        return self.assignment.size

    @property
    def K(self) -> int:
        return int(self.assignment.max()) + 1

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.K)

    def indices(self, k: int) -> np.ndarray:
        """Covariate indices belonging to group k."""
        return np.nonzero(self.assignment == k)[0]


@dataclass(frozen=True)
class BoostConfig:
    """Fitting configuration shared by all boosting variants.

    ``lam`` is the commonality tuning parameter and is only consulted by
    the commonality/difference algorithm; ``penalty_mode`` selects between
    counting all dataset pairs or only adjacent pairs of an ordered sequence.
    """

    nu: float = 0.1
    T: int = 500
    lam: float = 0.0
    algorithm: str = "cd_sboost"
    model: str = "lr"
    penalty_mode: str = "all_pairs"

    def __post_init__(self):
        if not 0.0 < self.nu <= 1.0:
            raise ValidationError(f"step size nu must be in (0, 1], got {self.nu}")
        if int(self.T) < 1:
            raise ValidationError(f"iteration cap T must be >= 1, got {self.T}")
        object.__setattr__(self, "T", int(self.T))
        if self.lam < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lam}")
        if self.algorithm not in ALGORITHMS:
            raise ValidationError(f"unknown algorithm {self.algorithm!r}")
        if self.model not in MODELS:
            raise ValidationError(f"unknown model {self.model!r}")
        if self.penalty_mode not in ("all_pairs", "ordered"):
            raise ValidationError(f"unknown penalty mode {self.penalty_mode!r}")


@dataclass
class CoefficientState:
    """p x M coefficient matrix plus per-group dataset equality classes."""

    beta: np.ndarray
    partitions: list[Partition]
    iteration: int = 0

    @classmethod
    def initial(cls, p: int, M: int, K: int) -> "CoefficientState":
        """All-zero coefficients; every group common across all datasets."""
        return cls(
            beta=np.zeros((p, M)),
            partitions=[all_common_partition(M)] * K,
            iteration=0,
        )


@dataclass
class FitResult:
    """Outcome of one fitting run at the selected iteration.

    ``beta_hat`` is p x M, ``partitions`` the per-group equality classes at
    the selected iteration, ``objective_trace`` the stopping objective for
    t = 1..T, and ``selected`` the per-dataset arrays of covariates with
    nonzero estimates.
    """

    beta_hat: np.ndarray
    t_hat: int
    partitions: list[Partition]
    objective_trace: np.ndarray
    loss_trace: np.ndarray | None = None  # summed pure loss per iteration
    selected: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.selected:
            self.selected = [
                np.nonzero(self.beta_hat[:, m])[0]
                for m in range(self.beta_hat.shape[1])
            ]

    @property
    def M(self) -> int:
        return self.beta_hat.shape[1]

    def group_verdicts(self, groups: GroupStructure) -> list[str]:
        """Per group: 'common', 'partial', or 'different' from the partition."""
        out = []
        for part in self.partitions:
            if len(part) == 1:
                out.append("common")
            elif all(len(c) == 1 for c in part):
                out.append("different")
            else:
                out.append("partial")
        return out


def all_common_partition(M: int) -> Partition:
    return (tuple(range(M)),)


def singleton_partitions(M: int, K: int) -> list[Partition]:
    return [tuple((m,) for m in range(M))] * K


def canonical_partition(classes) -> Partition:
    """Sort members within classes and classes by smallest member."""
    cs = [tuple(sorted(c)) for c in classes]
    cs.sort(key=lambda c: c[0])
    return tuple(cs)


def split_class(partition: Partition, subset: tuple[int, ...]) -> Partition:
    """Split the class containing ``subset`` into subset and complement.

    No-op when ``subset`` already equals its containing class. Raises if the
    subset straddles class boundaries (caller bug).
    """
    sub = frozenset(subset)
    out = []
    for c in partition:
        cset = frozenset(c)
        if sub & cset:
            if not sub <= cset:
                raise ValueError(f"subset {subset} straddles classes of {partition}")
            if sub == cset:
                return partition
            out.append(tuple(sorted(sub)))
            out.append(tuple(sorted(cset - sub)))
        else:
            out.append(c)
    return canonical_partition(out)


@dataclass(frozen=True)
class Problem:
    """Validated multi-dataset problem handle."""

    bundles: list[DatasetBundle]
    groups: GroupStructure
    model: str

    @property
    def M(self) -> int:
        return len(self.bundles)

    @property
    def p(self) -> int:
        return self.groups.p


def validate(bundles, groups: GroupStructure, model: str = "lr") -> Problem:
    """Check cross-dataset consistency and return a problem handle.

    Raises ``ValidationError`` on dimension mismatch, sample sizes below 2,
    missing values, censoring indicators under the linear-regression model,
    missing or all-zero indicators under the survival model, or group
    structure not matching p.
    """
    bundles = list(bundles)
    if not bundles:
        raise ValidationError("no datasets given")
    if model not in MODELS:
        raise ValidationError(f"unknown model {model!r}")
    p = bundles[0].p
    has_delta = bundles[0].delta is not None
    for b in bundles:
        if b.p != p:
            raise ValidationError(f"dataset {b.id}: p={b.p}, expected {p}")
        if b.n < 2:
            raise ValidationError(f"dataset {b.id}: needs at least 2 observations")
        if not np.isfinite(b.X).all() or not np.isfinite(b.y).all():
            raise ValidationError(f"dataset {b.id}: non-finite values")
        if (b.delta is not None) != has_delta:
            raise ValidationError("censoring indicators must be present for all datasets or none")
    if model == "lr" and has_delta:
        raise ValidationError("censoring indicators present under the LR model")
    if model == "aft":
        if not has_delta:
            raise ValidationError("AFT model requires event indicators")
        for b in bundles:
            if b.delta.sum() == 0:
                raise ValidationError(f"dataset {b.id}: all observations censored")
    if groups.p != p:
        raise ValidationError(f"group structure covers {groups.p} covariates, data has {p}")
    return Problem(bundles=bundles, groups=groups, model=model)


def partition_refresh(state: CoefficientState, groups: GroupStructure) -> CoefficientState:
    """Recompute equality classes by exact element-wise block comparison.

    Test-side cross-check for the incrementally maintained partitions.
    """
    p, M = state.beta.shape
    parts: list[Partition] = []
    for k in range(groups.K):
        block = state.beta[groups.indices(k), :]
        classes: list[list[int]] = []
        for m in range(M):
            for c in classes:
                if np.array_equal(block[:, c[0]], block[:, m]):
                    c.append(m)
                    break
            else:
                classes.append([m])
        parts.append(canonical_partition(classes))
    return CoefficientState(beta=state.beta, partitions=parts, iteration=state.iteration)


# ---------------------------------------------------------------------------
# File formats: one CSV per dataset (header row: y[,delta],<covariates...>)
# and a two-column TSV mapping covariate name -> group id.
# ---------------------------------------------------------------------------


def _parse_float(cell: str, where: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"{where}: non-numeric cell {cell!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"{where}: non-finite cell {cell!r}")
    return v


def read_dataset_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None, list[str]]:
    """Strictly parse one dataset CSV; returns (X, y, delta, covariate names).

    No standardization is applied here; values are returned exactly as
    written (bit-identical round trip with ``write_dataset_csv``).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if not header or header[0] != "y":
            raise ParseError(f"{path}: first column must be 'y'")
        has_delta = len(header) > 1 and header[1] == "delta"
        names = header[2:] if has_delta else header[1:]
        if not names:
            raise ParseError(f"{path}: no covariate columns")
        rows = []
        for i, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"{path}:{i}: expected {len(header)} cells, got {len(row)}")
            rows.append([_parse_float(c, f"{path}:{i}") for c in row])
    if not rows:
        raise ParseError(f"{path}: no data rows")
    data = np.asarray(rows)
    y = data[:, 0]
    if has_delta:
        delta = data[:, 1]
        if not np.isin(delta, (0.0, 1.0)).all():
            raise ParseError(f"{path}: delta column must contain only 0/1")
        return data[:, 2:], y, delta.astype(int), names
    return data[:, 1:], y, None, names


def standardize_columns(X: np.ndarray) -> np.ndarray:
    """Center to mean 0 and scale to unit variance; constant columns are
    centered only."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mu) / sd


def load_dataset_csv(path, id: int = 0, standardize: bool = True) -> tuple[DatasetBundle, list[str]]:
    """Load and (by default) standardize one dataset CSV."""
    X, y, delta, names = read_dataset_csv(path)
    if standardize:
        X = standardize_columns(X)
    return DatasetBundle(X=X, y=y, delta=delta, id=id), names


def load_bundles(paths, standardize: bool = True) -> tuple[list[DatasetBundle], list[str]]:
    """Load several dataset CSVs, enforcing a shared covariate ordering."""
    bundles = []
    names0: list[str] | None = None
    for i, path in enumerate(paths):
        b, names = load_dataset_csv(path, id=i, standardize=standardize)
        if names0 is None:
            names0 = names
        elif names != names0:
            raise ValidationError(f"{path}: covariate columns differ from {paths[0]}")
        bundles.append(b)
    return bundles, names0 or []


def read_groups_tsv(path, names: list[str]) -> GroupStructure:
    """Parse the covariate_name<TAB>group_id file against known covariates.

    Group ids may be arbitrary integers; they are normalized to contiguous
    0-based indices preserving numeric order.
    """
    mapping: dict[str, int] = {}
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh, delimiter="\t"), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise ParseError(f"{path}:{i}: expected 2 tab-separated columns")
            name, gid = row[0].strip(), row[1].strip()
            try:
                g = int(gid)
            except ValueError:
                raise ParseError(f"{path}:{i}: non-integer group id {gid!r}") from None
            if name in mapping:
                raise ParseError(f"{path}:{i}: duplicate covariate {name!r}")
            mapping[name] = g
    missing = [n for n in names if n not in mapping]
    if missing:
        raise ValidationError(f"{path}: no group for covariates {missing[:5]}")
    extra = set(mapping) - set(names)
    if extra:
        raise ValidationError(f"{path}: unknown covariates {sorted(extra)[:5]}")
    ids = sorted(set(mapping.values()))
    remap = {g: i for i, g in enumerate(ids)}
    assignment = np.array([remap[mapping[n]] for n in names], dtype=int)
    return GroupStructure(assignment=assignment, names=tuple(names))


def write_dataset_csv(path, X: np.ndarray, y: np.ndarray, delta=None, names=None):
    """Write one dataset in the CSV format accepted by ``read_dataset_csv``.

    Floats are written with full repr precision so a reload is bit-identical.
    """
    p = X.shape[1]
    if names is None:
        names = [f"x{j + 1}" for j in range(p)]
    header = ["y"] + (["delta"] if delta is not None else []) + list(names)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(X.shape[0]):
            row = [repr(float(y[i]))]
            if delta is not None:
                row.append(str(int(delta[i])))
            row.extend(repr(float(v)) for v in X[i])
            w.writerow(row)


def write_groups_tsv(path, groups: GroupStructure, names=None):
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(groups.p)]
    with open(path, "w", newline="") as fh:
        for name, g in zip(names, groups.assignment):
            fh.write(f"{name}\t{int(g) + 1}\n")
