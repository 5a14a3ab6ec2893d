"""Per-(property, class-logit) audit orchestration and consensus aggregation."""

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cmiknn import CmiknnConfig, cmiknn_test
from .dataset import (
    DEFAULT_MIN_STRATUM,
    Dataset,
    PropertySpec,
    one_hot_labels,
    standardize,
    stratify,
)
from .errors import (
    DegenerateInputError,
    InsufficientDataError,
    NumericalError,
    SchemaError,
)
from .kernels import ChsicConfig, chsic_test
from .nulls import TEST_IDS, TestOutcome
from .rcot import RcotConfig, rcot_test
from .utils import derive_seed

CONSENSUS_RULES = ("majority", "unanimous", "any")
MODES = ("stratify", "condition_on_label")
CORRECTIONS = ("none", "benjamini_hochberg")

CHECK, CROSS, SKIP_MARK = "✓", "✗", "-"


@dataclass(frozen=True)
class AuditConfig:
    alpha: float = 0.01
    mode: str = "stratify"
    tests: tuple = TEST_IDS
    consensus: str = "majority"
    correction: str = "none"
    B: int = 500
    seed: int = 0
    min_stratum: int = DEFAULT_MIN_STRATUM
    epsilon: float = 1e-3
    k_perm: int = 5
    rcot_null: str = "hbe"
    jobs: int = 1

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.tests:
            raise ValueError("at least one test must be enabled")
        for t in self.tests:
            if t not in TEST_IDS:
                raise ValueError(f"unknown test {t!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.consensus not in CONSENSUS_RULES:
            raise ValueError(f"unknown consensus rule {self.consensus!r}")
        if self.correction not in CORRECTIONS:
            raise ValueError(f"unknown correction {self.correction!r}")


@dataclass(frozen=True)
class ConsensusCell:
    property: str
    class_name: str
    outcomes: tuple
    significant: bool
    n_used: int
    skipped: bool = False
    skip_reason: str | None = None


@dataclass(frozen=True)
class SignificanceTable:
    run_label: str
    property_abbrs: tuple
    class_names: tuple
    cells: dict  # (abbr, class_name) -> ConsensusCell
    per_property_counts: dict  # abbr -> (significant, counted)
    total: tuple  # (significant, counted)

    @classmethod
    def from_cells(cls, run_label, property_abbrs, class_names, cells):
        per_prop = {}
        sig_total = counted_total = 0
        for abbr in property_abbrs:
            sig = counted = 0
            for name in class_names:
                cell = cells[(abbr, name)]
                if cell.skipped:
                    continue
                counted += 1
                sig += int(cell.significant)
            per_prop[abbr] = (sig, counted)
            sig_total += sig
            counted_total += counted
        return cls(
            run_label=run_label,
            property_abbrs=tuple(property_abbrs),
            class_names=tuple(class_names),
            cells=cells,
            per_property_counts=per_prop,
            total=(sig_total, counted_total),
        )

    @classmethod
    def from_decisions(cls, run_label, property_abbrs, class_names, grid):
        """Build a table from a plain boolean grid: grid[class_i][prop_j]."""
        cells = {}
        for i, name in enumerate(class_names):
            for j, abbr in enumerate(property_abbrs):
                cells[(abbr, name)] = ConsensusCell(
                    property=abbr,
                    class_name=name,
                    outcomes=(),
                    significant=bool(grid[i][j]),
                    n_used=0,
                )
        return cls.from_cells(run_label, property_abbrs, class_names, cells)


def consensus_decision(p_values, alpha: float, rule: str) -> bool:
    rejects = sum(1 for p in p_values if p < alpha)
    if rule == "majority":
        return rejects > len(p_values) / 2
    if rule == "unanimous":
        return rejects == len(p_values)
    if rule == "any":
        return rejects >= 1
    raise ValueError(f"unknown consensus rule {rule!r}")


def _run_one_test(test_id, x, y, z, seed, config: AuditConfig) -> TestOutcome:
    if test_id == "chsic":
        return chsic_test(
            x, y, z,
            ChsicConfig(B=config.B, epsilon=config.epsilon, k_perm=config.k_perm,
                        seed=seed, min_n=config.min_stratum),
        )
    if test_id == "rcot":
        return rcot_test(x, y, z, RcotConfig(null_method=config.rcot_null, B=config.B, seed=seed))
    if test_id == "cmiknn":
        return cmiknn_test(x, y, z, CmiknnConfig(k_perm=config.k_perm, B=config.B, seed=seed))
    raise ValueError(f"unknown test {test_id!r}")


def _cell_inputs(dataset: Dataset, prop: PropertySpec, class_index: int, config: AuditConfig):
    if config.mode == "stratify":
        sub = stratify(dataset, class_index, config.min_stratum)
        x_raw = sub.properties[prop.abbreviation]
        y_raw = sub.logits[:, class_index]
        z = None
    else:
        x_raw = dataset.properties[prop.abbreviation]
        y_raw = dataset.logits[:, class_index]
        z = one_hot_labels(dataset)
    x = x_raw if prop.kind == "binary" else standardize(x_raw).values
    y = standardize(y_raw).values
    return x, y, z


def run_cell(dataset: Dataset, prop: PropertySpec, class_index: int,
             config: AuditConfig) -> ConsensusCell:
    """Audit one (property, class-logit) pair under the configured mode."""
    class_name = dataset.class_names[class_index]
    if prop.abbreviation not in dataset.properties:
        raise SchemaError(f"property {prop.abbreviation!r} not present in the dataset")
    try:
        x, y, z = _cell_inputs(dataset, prop, class_index, config)
        outcomes = tuple(
            _run_one_test(
                tid, x, y, z,
                derive_seed(config.seed, prop.abbreviation, class_name, tid),
                config,
            )
            for tid in config.tests
        )
    except (InsufficientDataError, DegenerateInputError, NumericalError) as exc:
        return ConsensusCell(
            property=prop.abbreviation, class_name=class_name, outcomes=(),
            significant=False, n_used=0, skipped=True, skip_reason=str(exc),
        )
    significant = consensus_decision([o.p_value for o in outcomes], config.alpha, config.consensus)
    return ConsensusCell(
        property=prop.abbreviation, class_name=class_name, outcomes=outcomes,
        significant=significant, n_used=outcomes[0].n_used,
    )


def _benjamini_hochberg(cells, config: AuditConfig):
    """Per-test BH correction across cells; consensus is re-applied to the
    corrected rejection indicators."""
    keys = [k for k, c in cells.items() if not c.skipped]
    rejected = {}
    for ti, tid in enumerate(config.tests):
        ps = np.array([cells[k].outcomes[ti].p_value for k in keys])
        m = ps.size
        order = np.argsort(ps)
        keep = np.zeros(m, dtype=bool)
        threshold_rank = 0
        for rank, idx in enumerate(order, start=1):
            if ps[idx] <= rank * config.alpha / m:
                threshold_rank = rank
        keep[order[:threshold_rank]] = True
        rejected[tid] = dict(zip(keys, keep))
    corrected = dict(cells)
    for k in keys:
        indicators = [rejected[tid][k] for tid in config.tests]
        # reuse the consensus rule on 0/1 pseudo-p-values
        sig = consensus_decision([0.0 if r else 1.0 for r in indicators], 0.5, config.consensus)
        corrected[k] = replace(cells[k], significant=sig)
    return corrected


def run_audit(dataset: Dataset, config: AuditConfig = AuditConfig(),
              run_label: str = "run") -> SignificanceTable:
    """One consensus cell per (property, class); deterministic given the seed
    and independent of job count (per-cell seeds are derived, not sequential)."""
    props = dataset.property_specs
    if not props:
        raise SchemaError("dataset declares no properties to audit")
    tasks = [(p, ci) for p in props for ci in range(dataset.n_classes)]

    def work(task):
        prop, ci = task
        return (prop.abbreviation, dataset.class_names[ci]), run_cell(dataset, prop, ci, config)

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]
    cells = dict(results)
    if config.correction == "benjamini_hochberg":
        cells = _benjamini_hochberg(cells, config)
    return SignificanceTable.from_cells(
        run_label, [p.abbreviation for p in props], dataset.class_names, cells
    )


def aggregate_usage(table: SignificanceTable) -> dict:
    """Per-property fraction strings plus the overall usage fraction/percentage."""
    k, n = table.total
    return {
        "run_label": table.run_label,
        "per_property": {
            abbr: f"{sig}/{counted}" for abbr, (sig, counted) in table.per_property_counts.items()
        },
        "total": f"{k}/{n}",
        "percent": round(100.0 * k / n, 2) if n else 0.0,
    }


def _outcome_to_obj(o: TestOutcome):
    return {
        "test_id": o.test_id,
        "statistic": o.statistic,
        "p_value": o.p_value,
        "n_used": o.n_used,
        "seed": o.seed,
        "config_echo": o.config_echo,
    }


def table_to_json_obj(table: SignificanceTable) -> dict:
    return {
        "run_label": table.run_label,
        "property_abbrs": list(table.property_abbrs),
        "class_names": list(table.class_names),
        "cells": [
            {
                "property": c.property,
                "class_name": c.class_name,
                "outcomes": [_outcome_to_obj(o) for o in c.outcomes],
                "significant": c.significant,
                "n_used": c.n_used,
                "skipped": c.skipped,
                "skip_reason": c.skip_reason,
            }
            for _, c in sorted(table.cells.items())
        ],
    }


def table_from_json_obj(obj: dict) -> SignificanceTable:
    cells = {}
    for c in obj["cells"]:
        cells[(c["property"], c["class_name"])] = ConsensusCell(
            property=c["property"],
            class_name=c["class_name"],
            outcomes=tuple(TestOutcome(**o) for o in c["outcomes"]),
            significant=c["significant"],
            n_used=c["n_used"],
            skipped=c["skipped"],
            skip_reason=c["skip_reason"],
        )
    return SignificanceTable.from_cells(
        obj["run_label"], tuple(obj["property_abbrs"]), tuple(obj["class_names"]), cells
    )


def export_table(table: SignificanceTable, format: str) -> str:
    """Render the table as csv, json (lossless), or a check/cross text grid."""
    if format == "json":
        return json.dumps(table_to_json_obj(table), indent=2, sort_keys=True) + "\n"
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        test_ids = []
        for cell in table.cells.values():
            if cell.outcomes:
                test_ids = [o.test_id for o in cell.outcomes]
                break
        writer.writerow(
            ["property", "class", "significant", "n_used", "skipped", "skip_reason"]
            + [f"p_{t}" for t in test_ids]
        )
        for abbr in table.property_abbrs:
            for name in table.class_names:
                c = table.cells[(abbr, name)]
                pvals = {o.test_id: repr(o.p_value) for o in c.outcomes}
                writer.writerow(
                    [abbr, name, int(c.significant), c.n_used, int(c.skipped),
                     c.skip_reason or ""]
                    + [pvals.get(t, "") for t in test_ids]
                )
        return buf.getvalue()
    if format == "text_grid":
        widths = [max(8, *(len(n) for n in table.class_names))]
        header = ["class".ljust(widths[0])] + [a.rjust(6) for a in table.property_abbrs]
        lines = ["  ".join(header)]
        for name in table.class_names:
            row = [name.ljust(widths[0])]
            for abbr in table.property_abbrs:
                c = table.cells[(abbr, name)]
                mark = SKIP_MARK if c.skipped else (CHECK if c.significant else CROSS)
                row.append(mark.rjust(6))
            lines.append("  ".join(row))
        frac_row = ["usage".ljust(widths[0])]
        for abbr in table.property_abbrs:
            sig, counted = table.per_property_counts[abbr]
            frac_row.append(f"{sig}/{counted}".rjust(6))
        k, n = table.total
        lines.append("  ".join(frac_row) + f"  total {k}/{n}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown export format {format!r}")
