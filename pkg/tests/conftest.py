import json

import numpy as np
import pytest

from propaudit.dataset import load_dataset


def write_manifest(path, classes, properties, label_column="label", logit_prefix="logit_"):
    obj = {
        "classes": list(classes),
        "label_column": label_column,
        "logit_prefix": logit_prefix,
        "properties": properties,
    }
    path.write_text(json.dumps(obj, indent=2))


def write_table(path, classes, rows, prop_columns=()):
    header = ["sample_id", "label"] + [f"logit_{c}" for c in classes] + list(prop_columns)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def tiny_dataset(tmp_path):
    """3 samples, 7 classes, one binary property."""
    classes = ["angry", "disgusted", "fearful", "happy", "sad", "surprised", "neutral"]
    table = tmp_path / "data.csv"
    manifest = tmp_path / "manifest.json"
    rows = [
        ["s0", "happy", 0.1, 0.2, 0.3, 2.5, 0.0, -0.1, 0.4, 1],
        ["s1", "angry", 1.9, 0.0, 0.1, 0.2, 0.3, 0.1, 0.0, 0],
        ["s2", "neutral", 0.0, 0.1, 0.0, 0.3, 0.2, 0.0, 1.8, 1],
    ]
    write_table(table, classes, rows, prop_columns=["semg"])
    write_manifest(
        manifest,
        classes,
        [
            {
                "name": "attached sEMG",
                "abbreviation": "R_A",
                "group": "recording",
                "kind": "binary",
                "column": "semg",
            }
        ],
    )
    return load_dataset(table, manifest), table, manifest


def gaussian_pair(n, rho, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    y = rho * x + np.sqrt(1 - rho**2) * rng.standard_normal(n)
    return x, y
