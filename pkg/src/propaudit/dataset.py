"""Audit data model: sample tables, property manifests, and preprocessing.

A sample table is a CSV with one row per sample carrying the classifier's
per-class logits, the true label, and free-named property columns.  A manifest
(JSON) declares the class order, the label column, the logit column prefix,
and the audited properties.
"""

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    InsufficientDataError,
    ParseError,
    SchemaError,
    ValidationError,
)

PROPERTY_GROUPS = ("bodily", "recording", "symmetry", "custom")
PROPERTY_KINDS = ("scalar", "binary")

DEFAULT_MIN_STRATUM = 25


@dataclass(frozen=True)
class PropertySpec:
    """One audited property: where to find it and how it manifests."""

    name: str
    abbreviation: str
    group: str
    kind: str
    column: str

    def __post_init__(self):
        if self.group not in PROPERTY_GROUPS:
            raise ValidationError(
                f"property {self.name!r}: unknown group {self.group!r} "
                f"(expected one of {PROPERTY_GROUPS})"
            )
        if self.kind not in PROPERTY_KINDS:
            raise ValidationError(
                f"property {self.name!r}: unknown kind {self.kind!r} "
                f"(expected one of {PROPERTY_KINDS})"
            )


@dataclass(frozen=True)
class Manifest:
    class_names: tuple
    label_column: str
    logit_prefix: str
    properties: tuple  # of PropertySpec

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        for key in ("classes", "label_column", "logit_prefix", "properties"):
            if key not in raw:
                raise SchemaError(f"manifest missing required key {key!r}")
        specs = tuple(
            PropertySpec(
                name=p["name"],
                abbreviation=p["abbreviation"],
                group=p["group"],
                kind=p["kind"],
                column=p["column"],
            )
            for p in raw["properties"]
        )
        abbrs = [s.abbreviation for s in specs]
        dupes = {a for a in abbrs if abbrs.count(a) > 1}
        if dupes:
            raise ValidationError(f"duplicate property abbreviations: {sorted(dupes)}")
        return cls(
            class_names=tuple(raw["classes"]),
            label_column=raw["label_column"],
            logit_prefix=raw["logit_prefix"],
            properties=specs,
        )

    def to_json_obj(self):
        return {
            "classes": list(self.class_names),
            "label_column": self.label_column,
            "logit_prefix": self.logit_prefix,
            "properties": [
                {
                    "name": s.name,
                    "abbreviation": s.abbreviation,
                    "group": s.group,
                    "kind": s.kind,
                    "column": s.column,
                }
                for s in self.properties
            ],
        }

    def spec_for(self, abbreviation):
        for s in self.properties:
            if s.abbreviation == abbreviation:
                return s
        raise SchemaError(f"unknown property abbreviation {abbreviation!r}")


@dataclass(frozen=True)
class Dataset:
    """Validated, immutable audit input.

    ``logits`` is n x C, ``true_label`` n integer class indices, ``properties``
    maps a property abbreviation to its n-vector of manifestations.
    """

    class_names: tuple
    true_label: np.ndarray
    logits: np.ndarray
    properties: dict
    sample_id: tuple
    property_specs: tuple = field(default_factory=tuple)

    @property
    def n(self):
        return self.logits.shape[0]

    @property
    def n_classes(self):
        return len(self.class_names)

    def validate(self):
        n, c = self.logits.shape
        if c != len(self.class_names):
            raise ValidationError(
                f"logit matrix has {c} columns but {len(self.class_names)} classes declared"
            )
        if not np.all(np.isfinite(self.logits)):
            bad = int(np.argwhere(~np.isfinite(self.logits))[0][0])
            raise ValidationError(f"non-finite logit at row {bad}")
        if len(self.true_label) != n or len(self.sample_id) != n:
            raise ValidationError("column lengths disagree with the logit matrix")
        if np.any(self.true_label < 0) or np.any(self.true_label >= c):
            raise ValidationError("true_label outside [0, n_classes)")
        kinds = {s.abbreviation: s.kind for s in self.property_specs}
        for abbr, values in self.properties.items():
            if len(values) != n:
                raise ValidationError(f"property {abbr!r} has {len(values)} values, expected {n}")
            if not np.all(np.isfinite(values)):
                raise ValidationError(f"property {abbr!r} contains non-finite values")
            if kinds.get(abbr) == "binary":
                bad = np.nonzero(~np.isin(values, (0.0, 1.0)))[0]
                if bad.size:
                    raise ValidationError(
                        f"binary property {abbr!r} has value {values[bad[0]]!r} "
                        f"at row {int(bad[0])} (expected 0 or 1)"
                    )
        return self


@dataclass(frozen=True)
class StandardizedVector:
    values: np.ndarray
    original_mean: float
    original_std: float


def standardize(values) -> StandardizedVector:
    """Zero-mean, unit-std (population std) copy of ``values``.

    A constant vector maps to all zeros with ``original_std`` recorded as 0.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot standardize an empty vector")
    mean = float(values.mean())
    std = float(values.std())
    if std > 0.0:
        out = (values - mean) / std
    else:
        out = np.zeros_like(values)
    return StandardizedVector(values=out, original_mean=mean, original_std=std)


def load_dataset(table_path, manifest_path) -> Dataset:
    """Read a sample CSV plus its JSON manifest into a validated Dataset."""
    manifest = Manifest.from_json(manifest_path)
    with open(table_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)

    logit_cols = [manifest.logit_prefix + name for name in manifest.class_names]
    required = ["sample_id", manifest.label_column] + logit_cols
    required += [s.column for s in manifest.properties]
    for col in required:
        if col not in header:
            raise SchemaError(f"table is missing column {col!r}")

    n = len(rows)
    sample_id = tuple(r["sample_id"] for r in rows)
    class_index = {name: i for i, name in enumerate(manifest.class_names)}

    true_label = np.empty(n, dtype=np.int64)
    logits = np.empty((n, len(manifest.class_names)), dtype=float)
    for i, row in enumerate(rows):
        label = row[manifest.label_column]
        if label not in class_index:
            raise ValidationError(f"row {i}: unknown class label {label!r}")
        true_label[i] = class_index[label]
        for j, col in enumerate(logit_cols):
            try:
                logits[i, j] = float(row[col])
            except (TypeError, ValueError):
                raise ParseError(
                    f"row {i}: non-numeric value {row[col]!r} in logit column {col!r}"
                ) from None

    properties = {}
    for spec in manifest.properties:
        values = np.empty(n, dtype=float)
        for i, row in enumerate(rows):
            try:
                values[i] = float(row[spec.column])
            except (TypeError, ValueError):
                raise ParseError(
                    f"row {i}: non-numeric value {row[spec.column]!r} "
                    f"in property column {spec.column!r}"
                ) from None
        properties[spec.abbreviation] = values

    dataset = Dataset(
        class_names=manifest.class_names,
        true_label=true_label,
        logits=logits,
        properties=properties,
        sample_id=sample_id,
        property_specs=manifest.properties,
    )
    return dataset.validate()


def export_dataset(dataset: Dataset, table_path, logit_prefix="logit_", label_column="label"):
    """Write a Dataset back to the sample-table CSV schema (lossless floats)."""
    spec_by_abbr = {s.abbreviation: s for s in dataset.property_specs}
    prop_cols = [
        (spec_by_abbr[a].column if a in spec_by_abbr else a, a)
        for a in dataset.properties
    ]
    header = ["sample_id", label_column]
    header += [logit_prefix + c for c in dataset.class_names]
    header += [col for col, _ in prop_cols]
    with open(table_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n):
            row = [dataset.sample_id[i], dataset.class_names[dataset.true_label[i]]]
            row += [repr(float(v)) for v in dataset.logits[i]]
            row += [repr(float(dataset.properties[a][i])) for _, a in prop_cols]
            writer.writerow(row)


def export_manifest(dataset: Dataset, manifest_path, logit_prefix="logit_", label_column="label"):
    manifest = Manifest(
        class_names=dataset.class_names,
        label_column=label_column,
        logit_prefix=logit_prefix,
        properties=dataset.property_specs,
    )
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_json_obj(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def stratify(dataset: Dataset, class_index: int, min_size: int = DEFAULT_MIN_STRATUM) -> Dataset:
    """Subset to the samples whose true label is ``class_index``."""
    if not 0 <= class_index < dataset.n_classes:
        raise ValueError(f"class_index {class_index} outside [0, {dataset.n_classes})")
    mask = dataset.true_label == class_index
    count = int(mask.sum())
    if count < min_size:
        raise InsufficientDataError(
            f"class {dataset.class_names[class_index]!r} has {count} samples "
            f"(minimum stratum size {min_size})"
        )
    idx = np.nonzero(mask)[0]
    return replace(
        dataset,
        true_label=dataset.true_label[idx],
        logits=dataset.logits[idx],
        properties={a: v[idx] for a, v in dataset.properties.items()},
        sample_id=tuple(dataset.sample_id[i] for i in idx),
    )


def one_hot_labels(dataset: Dataset) -> np.ndarray:
    out = np.zeros((dataset.n, dataset.n_classes), dtype=float)
    out[np.arange(dataset.n), dataset.true_label] = 1.0
    return out
