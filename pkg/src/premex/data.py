"""Ingest, validate, transform, and summarize the insurance premium CSV.

The raw file has 11 columns (10 inputs + PremiumPrice).  Height and
Weight are folded into BMI, giving the 9-feature model matrix.  All
operations here are pure functions; nothing mutates its inputs.
"""

import csv
import math
from dataclasses import dataclass, fields

import numpy as np

from .artifacts import read_json_artifact, write_json_artifact
from .errors import DataValidationError, NumericError

RAW_COLUMNS = [
    "Age",
    "Diabetes",
    "BloodPressureProblems",
    "AnyTransplants",
    "AnyChronicDiseases",
    "Height",
    "Weight",
    "KnownAllergies",
    "HistoryOfCancerInFamily",
    "NumberOfMajorSurgeries",
    "PremiumPrice",
]

BINARY_COLUMNS = {
    "Diabetes",
    "BloodPressureProblems",
    "AnyTransplants",
    "AnyChronicDiseases",
    "KnownAllergies",
    "HistoryOfCancerInFamily",
}

# Model feature order is fixed; Height and Weight are replaced by BMI.
MODEL_FEATURES = [
    "Age",
    "Diabetes",
    "BloodPressureProblems",
    "AnyTransplants",
    "AnyChronicDiseases",
    "BMI",
    "KnownAllergies",
    "HistoryOfCancerInFamily",
    "NumberOfMajorSurgeries",
]

TARGET_NAME = "PremiumPrice"


def round_half_up(x: float) -> int:
    """round() uses banker's rounding; splits need half-up for determinism."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class RawRecord:
    age: float
    diabetes: float
    blood_pressure_problems: float
    any_transplants: float
    any_chronic_diseases: float
    height: float
    weight: float
    known_allergies: float
    history_of_cancer_in_family: float
    number_of_major_surgeries: float
    premium_price: float

    def as_tuple(self):
        return tuple(getattr(self, f.name) for f in fields(self))


@dataclass
class Dataset:
    """Feature matrix X (n x m), target y (n), and the m feature names."""

    feature_names: list
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 2:
            raise DataValidationError("X must be a 2-d matrix")
        if self.X.shape[0] != self.y.shape[0]:
            raise DataValidationError(
                f"X has {self.X.shape[0]} rows but y has {self.y.shape[0]}"
            )
        if len(self.feature_names) != self.X.shape[1]:
            raise DataValidationError(
                f"{len(self.feature_names)} feature names for {self.X.shape[1]} columns"
            )
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataValidationError("feature names must be unique")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise DataValidationError(f"unknown feature {name!r}") from None

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(list(self.feature_names), self.X[rows], self.y[rows])


@dataclass
class ScalerState:
    """Per-feature mean and sample (n-1) standard deviation of train rows."""

    mean: np.ndarray
    std: np.ndarray


@dataclass
class SplitIndices:
    train_rows: np.ndarray
    test_rows: np.ndarray
    seed: int


@dataclass
class SummaryStats:
    names: list
    mean: np.ndarray
    std: np.ndarray
    minimum: np.ndarray
    q1: np.ndarray
    median: np.ndarray
    q3: np.ndarray
    maximum: np.ndarray

    def rows(self):
        for i, name in enumerate(self.names):
            yield (
                name,
                self.mean[i],
                self.std[i],
                self.minimum[i],
                self.q1[i],
                self.median[i],
                self.q3[i],
                self.maximum[i],
            )


@dataclass
class CorrelationMatrix:
    names: list
    matrix: np.ndarray


@dataclass
class GroupStats:
    value: float
    count: int
    mean: float
    q1: float
    median: float
    q3: float
    minimum: float
    maximum: float


def load_csv(path) -> list:
    """Parse the premium CSV into RawRecords, validating schema and domains."""
    try:
        handle = open(path, "r", encoding="utf-8-sig", newline="")
    except OSError:
        raise
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file, expected a header row")
        header = [name.strip() for name in header]
        if header != RAW_COLUMNS:
            missing = [c for c in RAW_COLUMNS if c not in header]
            unexpected = [c for c in header if c not in RAW_COLUMNS]
            raise DataValidationError(
                f"{path}: header mismatch; missing columns {missing}, "
                f"unexpected columns {unexpected}"
            )
        records = []
        for row_number, row in enumerate(reader, start=1):
            if not row or all(cell.strip() == "" for cell in row):
                raise DataValidationError(f"{path}: row {row_number} is blank")
            if len(row) != len(RAW_COLUMNS):
                raise DataValidationError(
                    f"{path}: row {row_number} has {len(row)} cells, expected "
                    f"{len(RAW_COLUMNS)}"
                )
            values = []
            for column, cell in zip(RAW_COLUMNS, row):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataValidationError(
                        f"{path}: row {row_number}, column {column!r}: "
                        f"non-numeric value {cell.strip()!r}"
                    ) from None
                if column in BINARY_COLUMNS and value not in (0.0, 1.0):
                    raise DataValidationError(
                        f"{path}: row {row_number}, column {column!r}: "
                        f"binary flag must be 0 or 1, got {cell.strip()}"
                    )
                values.append(value)
            record = RawRecord(*values)
            _validate_record(record, path, row_number)
            records.append(record)
    if not records:
        raise DataValidationError(f"{path}: no rows after the header")
    return records


def _validate_record(record: RawRecord, path, row_number: int) -> None:
    checks = [
        (record.age >= 0, "Age must be >= 0"),
        (record.height > 0, "Height must be > 0"),
        (record.weight > 0, "Weight must be > 0"),
        (record.premium_price > 0, "PremiumPrice must be > 0"),
    ]
    for ok, message in checks:
        if not ok:
            raise DataValidationError(f"{path}: row {row_number}: {message}")


def detect_duplicates(records) -> list:
    """Groups of row indices whose entire record content is identical."""
    seen = {}
    for index, record in enumerate(records):
        seen.setdefault(record.as_tuple(), []).append(index)
    return [group for group in seen.values() if len(group) > 1]


def raw_table(records) -> Dataset:
    """The 10 raw input columns as a Dataset (PremiumPrice as target)."""
    matrix = np.array([r.as_tuple() for r in records], dtype=np.float64)
    return Dataset(RAW_COLUMNS[:-1], matrix[:, :-1], matrix[:, -1])


def derive_features(records) -> Dataset:
    """Build the model matrix: BMI replaces Height/Weight, order is fixed."""
    rows = []
    for index, record in enumerate(records):
        if record.height <= 0:
            raise DataValidationError(f"record {index}: non-positive height")
        bmi = record.weight / (record.height / 100.0) ** 2
        rows.append(
            [
                record.age,
                record.diabetes,
                record.blood_pressure_problems,
                record.any_transplants,
                record.any_chronic_diseases,
                bmi,
                record.known_allergies,
                record.history_of_cancer_in_family,
                record.number_of_major_surgeries,
            ]
        )
    matrix = np.array(rows, dtype=np.float64)
    target = np.array([r.premium_price for r in records], dtype=np.float64)
    return Dataset(list(MODEL_FEATURES), matrix, target)


def fit_scaler(data: Dataset, rows) -> ScalerState:
    """Means/stds over the given (train) rows only; the target is untouched."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise DataValidationError("cannot fit a scaler on zero rows")
    sub = data.X[rows]
    mean = sub.mean(axis=0)
    std = sub.std(axis=0, ddof=1) if rows.size > 1 else np.zeros(data.m)
    for j, s in enumerate(std):
        if s <= 0.0:
            raise NumericError(
                f"feature {data.feature_names[j]!r} is constant on the fit rows"
            )
    return ScalerState(mean=mean, std=std)


def apply_scaler(state: ScalerState, data: Dataset) -> Dataset:
    if state.mean.shape[0] != data.m:
        raise DataValidationError(
            f"scaler has {state.mean.shape[0]} columns, dataset has {data.m}"
        )
    scaled = (data.X - state.mean) / state.std
    return Dataset(list(data.feature_names), scaled, data.y.copy())


def invert_scaler(state: ScalerState, data: Dataset) -> Dataset:
    if state.mean.shape[0] != data.m:
        raise DataValidationError(
            f"scaler has {state.mean.shape[0]} columns, dataset has {data.m}"
        )
    restored = data.X * state.std + state.mean
    return Dataset(list(data.feature_names), restored, data.y.copy())


def train_test_split(n: int, fraction: float, seed: int) -> SplitIndices:
    """Seeded shuffle; the first round(fraction*n) rows become the train set."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    if n < 2:
        raise ValueError("need at least 2 rows to split")
    from .rng import stream

    permutation = stream(seed, "train_test_split").permutation(n)
    n_train = round_half_up(fraction * n)
    n_train = min(max(n_train, 1), n - 1)
    train = np.sort(permutation[:n_train])
    test = np.sort(permutation[n_train:])
    return SplitIndices(train_rows=train, test_rows=test, seed=int(seed))


def summary_statistics(data: Dataset, include_target: bool = True) -> SummaryStats:
    """Mean/std/min/quartiles/max per column, quartiles by linear interpolation."""
    if data.n < 1:
        raise DataValidationError("empty dataset")
    columns = data.X
    names = list(data.feature_names)
    if include_target:
        columns = np.column_stack([columns, data.y])
        names.append(TARGET_NAME)
    q1, median, q3 = np.percentile(columns, [25, 50, 75], axis=0, method="linear")
    std = (
        columns.std(axis=0, ddof=1)
        if data.n > 1
        else np.zeros(columns.shape[1])
    )
    return SummaryStats(
        names=names,
        mean=columns.mean(axis=0),
        std=std,
        minimum=columns.min(axis=0),
        q1=q1,
        median=median,
        q3=q3,
        maximum=columns.max(axis=0),
    )


def pearson_correlation(data: Dataset, include_target: bool = False) -> CorrelationMatrix:
    if data.n < 2:
        raise DataValidationError("need at least 2 rows for correlations")
    columns = data.X
    names = list(data.feature_names)
    if include_target:
        columns = np.column_stack([columns, data.y])
        names.append(TARGET_NAME)
    centered = columns - columns.mean(axis=0)
    norms = np.sqrt((centered**2).sum(axis=0))
    for j, s in enumerate(norms):
        if s == 0.0:
            raise NumericError(f"column {names[j]!r} is constant; correlation undefined")
    matrix = (centered.T @ centered) / np.outer(norms, norms)
    matrix = (matrix + matrix.T) / 2.0
    np.fill_diagonal(matrix, 1.0)
    return CorrelationMatrix(names=names, matrix=matrix)


def group_summary(data: Dataset, flag_feature: str) -> list:
    """Premium statistics per distinct value of a binary/small-cardinality feature."""
    column = data.X[:, data.feature_index(flag_feature)]
    groups = []
    for value in np.unique(column):
        premiums = data.y[column == value]
        q1, median, q3 = np.percentile(premiums, [25, 50, 75], method="linear")
        groups.append(
            GroupStats(
                value=float(value),
                count=int(premiums.size),
                mean=float(premiums.mean()),
                q1=float(q1),
                median=float(median),
                q3=float(q3),
                minimum=float(premiums.min()),
                maximum=float(premiums.max()),
            )
        )
    return groups


# --- JSON round-trips -------------------------------------------------------

def dataset_to_json(data: Dataset, path, *, seed=None) -> None:
    payload = {
        "feature_names": list(data.feature_names),
        "X": data.X.tolist(),
        "y": data.y.tolist(),
    }
    write_json_artifact(path, "dataset", payload, seed=seed, config={"columns": data.feature_names})


def dataset_from_json(path) -> Dataset:
    document = read_json_artifact(path, "dataset")
    return Dataset(document["feature_names"], np.array(document["X"]), np.array(document["y"]))


def scaler_to_json(state: ScalerState, path, *, seed=None) -> None:
    payload = {"mean": state.mean.tolist(), "std": state.std.tolist()}
    write_json_artifact(path, "scaler", payload, seed=seed, config=payload)


def scaler_from_json(path) -> ScalerState:
    document = read_json_artifact(path, "scaler")
    return ScalerState(
        mean=np.array(document["mean"], dtype=np.float64),
        std=np.array(document["std"], dtype=np.float64),
    )


def split_to_json(split: SplitIndices, path) -> None:
    payload = {
        "train_rows": [int(i) for i in split.train_rows],
        "test_rows": [int(i) for i in split.test_rows],
        "split_seed": split.seed,
    }
    write_json_artifact(path, "split", payload, seed=split.seed, config={"n": len(payload["train_rows"]) + len(payload["test_rows"])})


def split_from_json(path) -> SplitIndices:
    document = read_json_artifact(path, "split")
    return SplitIndices(
        train_rows=np.array(document["train_rows"], dtype=np.int64),
        test_rows=np.array(document["test_rows"], dtype=np.int64),
        seed=int(document["split_seed"]),
    )
