"""Dataset schema, CSV ingestion, 0-1/one-hot encoding, and report persistence.

Datasets travel as a CSV (features + target) plus a ``<name>.meta.json``
sidecar holding the schema, stable instance ids, the optional ground-truth
noise mask, and free-form provenance. Categorical cells are stored as their
schema category token in the CSV and as the category's index inside the
in-memory feature matrix, which keeps the matrix purely numeric.
"""

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

DATASET_FORMAT_VERSION = 1
REPORT_FORMAT_VERSION = 1

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass
class Column:
    name: str
    kind: str = NUMERIC
    categories: list = None

    def validate(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ValueError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.categories:
                raise ValueError(f"column {self.name!r}: categorical without categories")
            if len(set(self.categories)) != len(self.categories):
                raise ValueError(f"column {self.name!r}: duplicate categories")


@dataclass
class ColumnSchema:
    columns: list
    target: str
    target_classes: list
    positive_label: str = None

    def __post_init__(self):
        for col in self.columns:
            col.validate()
            if col.name == self.target:
                raise ValueError("target column listed among feature columns")
        if len(set(self.target_classes)) != len(self.target_classes):
            raise ValueError("duplicate target classes")
        if self.positive_label is None and len(self.target_classes) == 2:
            self.positive_label = self.target_classes[1]

    @property
    def k_classes(self) -> int:
        return len(self.target_classes)

    @property
    def positive_class(self) -> int:
        if self.positive_label is None:
            return 1
        return self.target_classes.index(self.positive_label)

    def to_dict(self) -> dict:
        return {
            "columns": [
                {"name": c.name, "kind": c.kind, "categories": c.categories}
                for c in self.columns
            ],
            "target": self.target,
            "target_classes": list(self.target_classes),
            "positive_label": self.positive_label,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ColumnSchema":
        return cls(
            columns=[
                Column(c["name"], c["kind"], c.get("categories"))
                for c in obj["columns"]
            ],
            target=obj["target"],
            target_classes=list(obj["target_classes"]),
            positive_label=obj.get("positive_label"),
        )

    @classmethod
    def numeric(cls, names, target="y", target_classes=("0", "1")) -> "ColumnSchema":
        return cls(
            columns=[Column(n) for n in names],
            target=target,
            target_classes=list(target_classes),
        )


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    schema: ColumnSchema
    ids: np.ndarray
    noise_mask: np.ndarray = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        n = self.X.shape[0]
        if self.y.shape != (n,) or self.ids.shape != (n,):
            raise ValueError("labels/ids do not align with feature rows")
        if len(np.unique(self.ids)) != n:
            raise ValueError("instance ids must be unique")
        if self.noise_mask is not None:
            self.noise_mask = np.asarray(self.noise_mask, dtype=bool)
            if self.noise_mask.shape != (n,):
                raise ValueError("noise mask length does not match row count")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k_classes(self) -> int:
        return self.schema.k_classes

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(
            X=self.X[indices],
            y=self.y[indices],
            schema=self.schema,
            ids=self.ids[indices],
            noise_mask=None if self.noise_mask is None else self.noise_mask[indices],
            provenance=dict(self.provenance),
        )

    def without(self, drop_mask) -> "Dataset":
        drop_mask = np.asarray(drop_mask, dtype=bool)
        return self.subset(np.nonzero(~drop_mask)[0])


# ---------------------------------------------------------------------------
# Encoding: one-hot categoricals + train-fitted 0-1 scaling for numerics.
# ---------------------------------------------------------------------------

@dataclass
class EncodedView:
    matrix: np.ndarray
    provenance: list  # (source column name, category token or None) per encoded column
    scale_params: dict  # numeric column name -> (min, max) fitted on train
    constant_columns: list


def _encode_with_params(ds: Dataset, scale_params: dict) -> np.ndarray:
    cols = []
    for j, col in enumerate(ds.schema.columns):
        raw = ds.X[:, j]
        if col.kind == NUMERIC:
            lo, hi = scale_params[col.name]
            if hi > lo:
                cols.append(np.clip((raw - lo) / (hi - lo), 0.0, 1.0))
            else:
                cols.append(np.zeros(ds.n))
        else:
            codes = raw.astype(np.int64)
            block = np.zeros((ds.n, len(col.categories)))
            valid = (codes >= 0) & (codes < len(col.categories))
            block[np.nonzero(valid)[0], codes[valid]] = 1.0
            cols.append(block)
    return np.column_stack(cols)


def _encoding_provenance(schema: ColumnSchema) -> list:
    prov = []
    for col in schema.columns:
        if col.kind == NUMERIC:
            prov.append((col.name, None))
        else:
            prov.extend((col.name, cat) for cat in col.categories)
    return prov


def fit_encoding(ds: Dataset) -> EncodedView:
    """Fit scaling on ``ds`` (use the training split only) and encode it."""
    scale_params = {}
    constant = []
    for j, col in enumerate(ds.schema.columns):
        if col.kind == NUMERIC:
            lo, hi = float(ds.X[:, j].min()), float(ds.X[:, j].max())
            scale_params[col.name] = (lo, hi)
            if hi == lo:
                constant.append(col.name)
    return EncodedView(
        matrix=_encode_with_params(ds, scale_params),
        provenance=_encoding_provenance(ds.schema),
        scale_params=scale_params,
        constant_columns=constant,
    )


def apply_encoding(view: EncodedView, ds: Dataset) -> EncodedView:
    """Encode ``ds`` with parameters fitted elsewhere; out-of-range numerics clamp."""
    return EncodedView(
        matrix=_encode_with_params(ds, view.scale_params),
        provenance=list(view.provenance),
        scale_params=dict(view.scale_params),
        constant_columns=list(view.constant_columns),
    )


# ---------------------------------------------------------------------------
# CSV + sidecar persistence
# ---------------------------------------------------------------------------

def _atomic_write(path: str, data: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(data)
    os.replace(tmp, path)


def dataset_prefix(path: str) -> str:
    for suffix in (".meta.json", ".csv"):
        if path.endswith(suffix):
            return path[: -len(suffix)]
    return path


def _format_cell(value: float, col: Column) -> str:
    if col.kind == NUMERIC:
        return repr(float(value))
    return col.categories[int(value)]


def _parse_cell(token: str, col: Column, row: int):
    if col.kind == NUMERIC:
        if token == "":
            raise ValueError(f"row {row}, column {col.name!r}: missing value")
        try:
            value = float(token)
        except ValueError:
            raise ValueError(
                f"row {row}, column {col.name!r}: invalid numeric value {token!r}"
            ) from None
        if not np.isfinite(value):
            raise ValueError(f"row {row}, column {col.name!r}: non-finite value")
        return value
    try:
        return float(col.categories.index(token))
    except ValueError:
        raise ValueError(
            f"row {row}, column {col.name!r}: unknown category {token!r}"
        ) from None


def load_csv(path: str, schema: ColumnSchema, ids=None) -> Dataset:
    """Parse a header-carrying CSV per ``schema``; rejects missing/unknown cells."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        expected = [c.name for c in schema.columns] + [schema.target]
        if header != expected:
            raise ValueError(f"{path}: header does not match schema columns")
        rows_x, rows_y = [], []
        for i, row in enumerate(reader, start=1):
            if len(row) != len(expected):
                raise ValueError(f"row {i}: expected {len(expected)} cells, got {len(row)}")
            rows_x.append(
                [_parse_cell(tok, col, i) for tok, col in zip(row[:-1], schema.columns)]
            )
            try:
                rows_y.append(schema.target_classes.index(row[-1]))
            except ValueError:
                raise ValueError(
                    f"row {i}, column {schema.target!r}: unknown class {row[-1]!r}"
                ) from None
    if not rows_x:
        raise ValueError(f"{path}: no data rows")
    n = len(rows_x)
    return Dataset(
        X=np.array(rows_x),
        y=np.array(rows_y),
        schema=schema,
        ids=np.arange(n) if ids is None else np.asarray(ids),
        provenance={"source": path},
    )


def save_dataset(ds: Dataset, prefix: str) -> None:
    prefix = dataset_prefix(prefix)
    os.makedirs(os.path.dirname(prefix) or ".", exist_ok=True)
    lines = [",".join([c.name for c in ds.schema.columns] + [ds.schema.target])]
    for i in range(ds.n):
        cells = [
            _format_cell(ds.X[i, j], col) for j, col in enumerate(ds.schema.columns)
        ]
        cells.append(ds.schema.target_classes[int(ds.y[i])])
        lines.append(",".join(cells))
    _atomic_write(f"{prefix}.csv", "\n".join(lines) + "\n")

    meta = {
        "format_version": DATASET_FORMAT_VERSION,
        "schema": ds.schema.to_dict(),
        "ids": [int(i) for i in ds.ids],
        "noise_mask": None
        if ds.noise_mask is None
        else [bool(b) for b in ds.noise_mask],
        "provenance": ds.provenance,
    }
    _atomic_write(f"{prefix}.meta.json", json.dumps(meta, sort_keys=True, indent=1) + "\n")


def _infer_schema(path: str) -> ColumnSchema:
    """Fallback schema when the sidecar is missing: numeric unless parsing fails."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    columns = []
    for j, name in enumerate(header[:-1]):
        tokens = [r[j] for r in rows]
        try:
            for tok in tokens:
                float(tok)
            columns.append(Column(name))
        except ValueError:
            columns.append(Column(name, CATEGORICAL, sorted(set(tokens))))
    classes = sorted(set(r[-1] for r in rows))
    return ColumnSchema(columns=columns, target=header[-1], target_classes=classes)


def load_dataset(prefix: str) -> Dataset:
    prefix = dataset_prefix(prefix)
    csv_path = f"{prefix}.csv"
    meta_path = f"{prefix}.meta.json"
    if not os.path.exists(meta_path):
        ds = load_csv(csv_path, _infer_schema(csv_path))
        ds.provenance["warning"] = "sidecar missing; schema inferred from CSV"
        return ds
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("format_version") != DATASET_FORMAT_VERSION:
        raise ValueError(f"unsupported dataset sidecar version {meta.get('format_version')!r}")
    schema = ColumnSchema.from_dict(meta["schema"])
    ids = np.array(meta["ids"], dtype=np.int64)
    ds = load_csv(csv_path, schema, ids=None)
    if len(ids) != ds.n:
        raise ValueError(
            f"sidecar/CSV row-count mismatch: {len(ids)} ids for {ds.n} rows"
        )
    mask = meta.get("noise_mask")
    if mask is not None and len(mask) != ds.n:
        raise ValueError("noise mask length does not match row count")
    return Dataset(
        X=ds.X,
        y=ds.y,
        schema=schema,
        ids=ids,
        noise_mask=None if mask is None else np.array(mask, dtype=bool),
        provenance=meta.get("provenance", {}),
    )


def clean_dataset_files(in_prefix: str, flagged_ids, out_prefix: str) -> int:
    """Copy a dataset minus flagged rows, preserving surviving CSV lines byte-for-byte."""
    in_prefix = dataset_prefix(in_prefix)
    out_prefix = dataset_prefix(out_prefix)
    ds = load_dataset(in_prefix)
    flagged = set(int(i) for i in flagged_ids)
    keep = np.array([int(i) not in flagged for i in ds.ids], dtype=bool)

    with open(f"{in_prefix}.csv", "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines(keepends=True)
    out_lines = [lines[0]]
    out_lines.extend(line for line, k in zip(lines[1:], keep) if k)
    os.makedirs(os.path.dirname(out_prefix) or ".", exist_ok=True)
    _atomic_write(f"{out_prefix}.csv", "".join(out_lines))

    meta = {
        "format_version": DATASET_FORMAT_VERSION,
        "schema": ds.schema.to_dict(),
        "ids": [int(i) for i in ds.ids[keep]],
        "noise_mask": None
        if ds.noise_mask is None
        else [bool(b) for b in ds.noise_mask[keep]],
        "provenance": {**ds.provenance, "cleaned_from": os.path.basename(in_prefix),
                       "removed": int((~keep).sum())},
    }
    _atomic_write(f"{out_prefix}.meta.json", json.dumps(meta, sort_keys=True, indent=1) + "\n")
    return int(keep.sum())


# ---------------------------------------------------------------------------
# Cartography report JSON
# ---------------------------------------------------------------------------

@dataclass
class CartographyPoint:
    id: int
    mu: float
    sigma: float
    correctness: float
    product: float
    label: int
    weight: float = None
    flagged: bool = None

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "mu": self.mu,
            "sigma": self.sigma,
            "correctness": self.correctness,
            "product": self.product,
            "label": self.label,
        }
        if self.weight is not None:
            out["weight"] = self.weight
        if self.flagged is not None:
            out["flagged"] = self.flagged
        return out


@dataclass
class CartographyReport:
    dataset_id: str
    num_iterations: int
    points: list
    format_version: int = REPORT_FORMAT_VERSION

    def scores(self, name: str) -> np.ndarray:
        if name == "product":
            return np.array([p.product for p in self.points])
        if name == "weight":
            weights = [p.weight for p in self.points]
            if any(w is None for w in weights):
                raise ValueError("report carries no weight scores")
            return np.array(weights)
        raise ValueError(f"unknown score {name!r}")

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "dataset_id": self.dataset_id,
            "num_iterations": self.num_iterations,
            "points": [p.to_dict() for p in self.points],
        }


def _check_unit(value: float, name: str) -> float:
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"report metric {name} outside [0, 1]: {value}")
    return float(value)


def report_from_dict(obj: dict) -> CartographyReport:
    version = obj.get("format_version")
    if version != REPORT_FORMAT_VERSION:
        raise ValueError(f"unsupported report version {version!r}")
    points = []
    for p in obj["points"]:
        points.append(
            CartographyPoint(
                id=int(p["id"]),
                mu=_check_unit(p["mu"], "mu"),
                sigma=_check_unit(p["sigma"], "sigma"),
                correctness=_check_unit(p["correctness"], "correctness"),
                product=_check_unit(p["product"], "product"),
                label=int(p["label"]),
                weight=None if p.get("weight") is None else _check_unit(p["weight"], "weight"),
                flagged=None if p.get("flagged") is None else bool(p["flagged"]),
            )
        )
    return CartographyReport(
        dataset_id=str(obj.get("dataset_id", "")),
        num_iterations=int(obj["num_iterations"]),
        points=points,
    )


def write_report(report: CartographyReport, path: str) -> None:
    if not report.points:
        raise ValueError("empty dynamics")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    _atomic_write(path, json.dumps(report.to_dict(), sort_keys=True) + "\n")


def read_report(path: str) -> CartographyReport:
    with open(path, "r", encoding="utf-8") as fh:
        return report_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Public dataset loaders
# ---------------------------------------------------------------------------

def load_breast_cancer_dataset() -> Dataset:
    """Wisconsin diagnostic breast cancer set (569 x 30, numeric, binary)."""
    from sklearn.datasets import load_breast_cancer

    bunch = load_breast_cancer()
    names = [n.replace(" ", "_") for n in bunch.feature_names]
    schema = ColumnSchema.numeric(
        names, target="diagnosis", target_classes=["malignant", "benign"]
    )
    return Dataset(
        X=bunch.data,
        y=bunch.target,
        schema=schema,
        ids=np.arange(bunch.data.shape[0]),
        provenance={"source": "sklearn.datasets.load_breast_cancer"},
    )


ADULT_CATEGORIES = {
    "workclass": ["Federal-gov", "Local-gov", "Never-worked", "Private", "Self-emp-inc",
                  "Self-emp-not-inc", "State-gov", "Without-pay", "unknown"],
    "education": ["10th", "11th", "12th", "1st-4th", "5th-6th", "7th-8th", "9th",
                  "Assoc-acdm", "Assoc-voc", "Bachelors", "Doctorate", "HS-grad",
                  "Masters", "Preschool", "Prof-school", "Some-college"],
    "marital_status": ["Divorced", "Married-AF-spouse", "Married-civ-spouse",
                       "Married-spouse-absent", "Never-married", "Separated", "Widowed"],
    "occupation": ["Adm-clerical", "Armed-Forces", "Craft-repair", "Exec-managerial",
                   "Farming-fishing", "Handlers-cleaners", "Machine-op-inspct",
                   "Other-service", "Priv-house-serv", "Prof-specialty",
                   "Protective-serv", "Sales", "Tech-support", "Transport-moving",
                   "unknown"],
    "relationship": ["Husband", "Not-in-family", "Other-relative", "Own-child",
                     "Unmarried", "Wife"],
    "race": ["Amer-Indian-Eskimo", "Asian-Pac-Islander", "Black", "Other", "White"],
    "sex": ["Female", "Male"],
    "native_country": ["Cambodia", "Canada", "China", "Columbia", "Cuba",
                       "Dominican-Republic", "Ecuador", "El-Salvador", "England",
                       "France", "Germany", "Greece", "Guatemala", "Haiti",
                       "Holand-Netherlands", "Honduras", "Hong", "Hungary", "India",
                       "Iran", "Ireland", "Italy", "Jamaica", "Japan", "Laos",
                       "Mexico", "Nicaragua", "Outlying-US(Guam-USVI-etc)", "Peru",
                       "Philippines", "Poland", "Portugal", "Puerto-Rico", "Scotland",
                       "South", "Taiwan", "Thailand", "Trinadad&Tobago",
                       "United-States", "Vietnam", "Yugoslavia", "unknown"],
}

ADULT_COLUMN_ORDER = [
    "age", "workclass", "fnlwgt", "education", "education_num", "marital_status",
    "occupation", "relationship", "race", "sex", "capital_gain", "capital_loss",
    "hours_per_week", "native_country",
]


def adult_schema() -> ColumnSchema:
    columns = [
        Column(name, CATEGORICAL, ADULT_CATEGORIES[name])
        if name in ADULT_CATEGORIES
        else Column(name)
        for name in ADULT_COLUMN_ORDER
    ]
    return ColumnSchema(
        columns=columns,
        target="income",
        target_classes=["<=50K", ">50K"],
        positive_label=">50K",
    )


def load_adult_dataset(path: str) -> Dataset:
    """Parse the raw headerless census file; '?' cells become the 'unknown' category."""
    schema = adult_schema()
    rows_x, rows_y = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            tokens = [tok.strip() for tok in line.split(",")]
            if len(tokens) != len(ADULT_COLUMN_ORDER) + 1:
                raise ValueError(f"row {i}: expected {len(ADULT_COLUMN_ORDER) + 1} cells")
            tokens = ["unknown" if tok == "?" else tok for tok in tokens]
            label = tokens[-1].rstrip(".")
            rows_x.append(
                [_parse_cell(tok, col, i) for tok, col in zip(tokens[:-1], schema.columns)]
            )
            try:
                rows_y.append(schema.target_classes.index(label))
            except ValueError:
                raise ValueError(f"row {i}: unknown income class {label!r}") from None
    if not rows_x:
        raise ValueError(f"{path}: no data rows")
    return Dataset(
        X=np.array(rows_x),
        y=np.array(rows_y),
        schema=schema,
        ids=np.arange(len(rows_x)),
        provenance={"source": path},
    )
