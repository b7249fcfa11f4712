from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from causalprompt.utils.Errors import AlignmentError, DataError, EmptyMatrixError, InsufficientData
from causalprompt.utils.Files import atomic_write_text
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)

META, LING, METRIC = "M", "L", "C"
TIERS = (META, LING, METRIC)
CONSTANT_EPS = 1e-12


@dataclass(frozen=True)
class VariableSchema:
    """Ordered variable names per tier; column order is always M, then L, then C."""
    meta_names: Tuple[str, ...] = ()
    ling_names: Tuple[str, ...] = ()
    metric_names: Tuple[str, ...] = ()

    def __post_init__(self):
        for attr in ("meta_names", "ling_names", "metric_names"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        names = self.names
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise DataError(f"variable names must be unique across tiers: {duplicates}")

    @property
    def names(self) -> List[str]:
        return list(self.meta_names) + list(self.ling_names) + list(self.metric_names)

    def tier_of(self, name: str) -> str:
        if name in self.meta_names:
            return META
        if name in self.ling_names:
            return LING
        if name in self.metric_names:
            return METRIC
        raise KeyError(name)

    def tiers(self) -> Dict[str, str]:
        return {name: self.tier_of(name) for name in self.names}

    def restrict(self, keep: Sequence[str]) -> "VariableSchema":
        keep = set(keep)
        return VariableSchema(
            tuple(n for n in self.meta_names if n in keep),
            tuple(n for n in self.ling_names if n in keep),
            tuple(n for n in self.metric_names if n in keep),
        )

    def __len__(self) -> int:
        return len(self.names)


@dataclass(frozen=True, eq=False)
class ObservationMatrix:
    schema: VariableSchema
    rows: np.ndarray
    scaling: Optional[Dict[str, Tuple[float, float]]] = None
    """Per-column (mean, stddev) of the original scale, for the standardized columns."""
    constant: FrozenSet[str] = frozenset()
    ids: Tuple[str, ...] = ()
    dropped_rows: int = 0

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            rows = rows.reshape(-1, len(self.schema))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "constant", frozenset(self.constant))
        if rows.shape[1] != len(self.schema):
            raise DataError(f"matrix has {rows.shape[1]} columns, schema has {len(self.schema)}")
        if not np.all(np.isfinite(rows)):
            raise DataError("observation matrix contains non-finite entries")
        for name in self.schema.meta_names:
            values = rows[:, self.index(name)]
            if not np.all((values == 0) | (values == 1)):
                raise DataError(f"meta-prompt column '{name}' must be 0/1")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def names(self) -> List[str]:
        return self.schema.names

    def index(self, name: str) -> int:
        try:
            return self.schema.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.index(name)]

    def columns(self, names: Sequence[str]) -> np.ndarray:
        return self.rows[:, [self.index(n) for n in names]] if names else np.empty((self.n, 0))

    def select(self, names: Sequence[str]) -> "ObservationMatrix":
        schema = self.schema.restrict(names)
        scaling = None if self.scaling is None else {k: v for k, v in self.scaling.items() if k in schema.names}
        return replace(self, schema=schema, rows=self.columns(schema.names), scaling=scaling,
                       constant=self.constant & set(schema.names))

    def take(self, row_index: np.ndarray) -> "ObservationMatrix":
        ids = tuple(self.ids[i] for i in row_index) if self.ids else ()
        return replace(self, rows=self.rows[row_index], ids=ids)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows, columns=[f"{n}:{self.schema.tier_of(n)}" for n in self.names])
        if self.ids:
            frame.insert(0, "id", list(self.ids))
        return frame

    def save_csv(self, path: Union[str, Path]) -> Path:
        text = self.to_frame().to_csv(index=False, float_format="%.17g", lineterminator="\n")
        return atomic_write_text(path, text)


def load_matrix(path: Union[str, Path]) -> ObservationMatrix:
    """Read a matrix CSV whose header is `name:tier` per column (optional leading `id`)."""
    frame = pd.read_csv(path, dtype={"id": str})
    ids: Tuple[str, ...] = ()
    if "id" in frame.columns:
        ids = tuple(frame.pop("id").astype(str))
    tiers: Dict[str, List[str]] = {META: [], LING: [], METRIC: []}
    for header in frame.columns:
        name, _, tier = str(header).rpartition(":")
        if tier not in tiers or not name:
            raise DataError(f"matrix column '{header}' is not of the form name:tier")
        tiers[tier].append(name)
    schema = VariableSchema(tuple(tiers[META]), tuple(tiers[LING]), tuple(tiers[METRIC]))
    frame.columns = [str(h).rpartition(":")[0] for h in frame.columns]
    return ObservationMatrix(schema, frame[schema.names].to_numpy(dtype=float), ids=ids)


def assemble_matrix(records, features, metrics, schema: VariableSchema) -> ObservationMatrix:
    """
    Stack meta-prompt bits, linguistic features and code metrics into one row per
    record, columns in schema tier order. Rows with a non-finite metric are dropped.

    features and metrics are aligned with records by position; when they carry a
    record_id it must match the record's id.
    """
    if len(features) != len(records) or len(metrics) != len(records):
        shorter = min(len(features), len(metrics))
        missing = records[shorter].id if shorter < len(records) else "<extra entries>"
        raise AlignmentError(missing)

    rows, ids, dropped = [], [], 0
    for record, feature_vector, metric_vector in zip(records, features, metrics):
        for item in (feature_vector, metric_vector):
            if getattr(item, "record_id", None) not in (None, record.id):
                raise AlignmentError(record.id)
        if len(record.intention_vector) != len(schema.meta_names):
            raise AlignmentError(record.id)

        feature_values = feature_vector.as_dict()
        metric_values = metric_vector.as_dict()
        try:
            row = [float(b) for b in record.intention_vector.bits]
            row += [float(feature_values[name]) for name in schema.ling_names]
            metric_row = [metric_values[name] for name in schema.metric_names]
        except KeyError as error:
            raise DataError(f"record '{record.id}' has no value for {error}") from None
        metric_row = [np.nan if v is None else float(v) for v in metric_row]
        if not np.all(np.isfinite(metric_row)) or not np.all(np.isfinite(row)):
            dropped += 1
            continue
        rows.append(row + metric_row)
        ids.append(record.id)

    if not rows:
        raise EmptyMatrixError(f"all {dropped} rows were dropped")
    if dropped:
        logger.warning(f"Dropped {dropped} rows with non-finite metrics")
    return ObservationMatrix(schema, np.array(rows, dtype=float), ids=tuple(ids), dropped_rows=dropped)


def standardize(m: ObservationMatrix) -> ObservationMatrix:
    """
    Z-score every non-meta column. Meta-prompt columns stay 0/1; constant columns
    are flagged and left as they are. Scaling parameters are kept for inversion.
    """
    rows = m.rows.copy()
    scaling = dict(m.scaling or {})
    constant = set(m.constant)
    for name in m.names:
        if m.schema.tier_of(name) == META:
            if np.ptp(m.column(name)) == 0:
                constant.add(name)
            continue
        j = m.index(name)
        mean, std = float(rows[:, j].mean()), float(rows[:, j].std())
        if std <= CONSTANT_EPS:
            constant.add(name)
            continue
        rows[:, j] = (rows[:, j] - mean) / std
        scaling[name] = (mean, std)
    return replace(m, rows=rows, scaling=scaling, constant=frozenset(constant))


def unstandardize(m: ObservationMatrix) -> ObservationMatrix:
    rows = m.rows.copy()
    for name, (mean, std) in (m.scaling or {}).items():
        j = m.index(name)
        rows[:, j] = rows[:, j] * std + mean
    return replace(m, rows=rows, scaling=None)


def drop_uncorrelated(m: ObservationMatrix, alpha: float = 0.05) -> ObservationMatrix:
    """
    Remove linguistic columns whose Pearson correlation with every meta and every
    metric column is not significant (two-sided t-test). alpha is the level per
    column over all its comparisons: each test runs at the Sidak level
    1 - (1 - alpha) ** (1 / k) for k comparators.
    Meta and metric columns are never removed; constant columns are left for
    discovery to exclude.
    """
    if m.n < 10:
        raise InsufficientData(m.n, 10)
    comparators = [n for n in m.schema.meta_names + m.schema.metric_names if n not in m.constant]
    comparators = [n for n in comparators if np.ptp(m.column(n)) > CONSTANT_EPS]
    level = 1.0 - (1.0 - alpha) ** (1.0 / len(comparators)) if comparators else alpha
    removed = []
    for name in m.schema.ling_names:
        if name in m.constant or not comparators:
            continue
        x = m.column(name)
        if np.ptp(x) <= CONSTANT_EPS:
            continue
        keep = False
        for other in comparators:
            _, p_value = stats.pearsonr(x, m.column(other))
            if p_value <= level:
                keep = True
                break
        if not keep:
            removed.append(name)
    if removed:
        logger.info(f"Correlation screen removed {len(removed)} linguistic columns: {removed}")
    return m.select([n for n in m.names if n not in removed])
