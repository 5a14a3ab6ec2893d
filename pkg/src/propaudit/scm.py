"""Synthetic structural-causal-model generators with known (in)dependence.

Two generator families back every statistical claim in the test suite: a
common-cause triple where x and y are dependent only through z (so x is
conditionally independent of y given z), and a full classifier-table fixture
with one property planted into a target logit and one generated independently.
"""

from dataclasses import dataclass, replace

import numpy as np

from .dataset import Dataset, PropertySpec, standardize
from .utils import derive_seed

SCM_KINDS = ("null_common_cause", "direct_dependence", "pipeline_fixture")

EMOTIONS = ("angry", "disgusted", "fearful", "happy", "sad", "surprised", "neutral")

PLANTED_ABBR = "P_DEP"
INDEPENDENT_ABBR = "P_IND"


@dataclass(frozen=True)
class ScmSpec:
    kind: str
    n: int = 500
    effect_size: float = 0.5
    noise_std: float = 1.0
    property_kind: str = "scalar"
    classes: int = 7
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCM_KINDS:
            raise ValueError(f"unknown SCM kind {self.kind!r}")
        if self.n < 50:
            raise ValueError("n must be >= 50")
        if self.effect_size < 0:
            raise ValueError("effect_size must be >= 0")
        if self.property_kind not in ("scalar", "binary"):
            raise ValueError(f"unknown property_kind {self.property_kind!r}")


@dataclass(frozen=True)
class GroundTruth:
    """Per (property, class) dependence flags fixed by the generating equations."""

    cells: dict

    def dependent(self, prop: str, class_name: str) -> bool:
        return self.cells[(prop, class_name)]


def generate_scm_dataset(spec: ScmSpec):
    """Return (x, y, z, GroundTruth) arrays for the common-cause SCM.

    z ~ N(0,1); x = tanh(z) + noise; y = z^2/2 + noise.  The direct kind adds
    effect_size * x to y.  Nonlinear links keep linear-only tests blind.
    """
    if spec.kind == "pipeline_fixture":
        raise ValueError("use generate_pipeline_fixture for the pipeline kind")
    rng = np.random.default_rng(spec.seed)
    z = rng.standard_normal(spec.n)
    x = np.tanh(z) + spec.noise_std * rng.standard_normal(spec.n)
    if spec.property_kind == "binary":
        x = (x > np.median(x)).astype(float)
    y = z**2 / 2.0 + spec.noise_std * rng.standard_normal(spec.n)
    dependent = spec.kind == "direct_dependence" and spec.effect_size > 0
    if spec.kind == "direct_dependence":
        y = y + spec.effect_size * x
    truth = GroundTruth(cells={("x", "y"): dependent})
    return x, y, z, truth


def generate_pipeline_fixture(spec: ScmSpec):
    """Full audit-table fixture: ``classes`` logit columns, balanced labels,
    one planted and one independent property, plus the ground-truth grid."""
    if spec.classes < 2:
        raise ValueError("pipeline fixture needs at least 2 classes")
    class_names = (
        EMOTIONS if spec.classes == len(EMOTIONS) else tuple(f"class_{i}" for i in range(spec.classes))
    )
    target = class_names.index("happy") if "happy" in class_names else 0

    rng = np.random.default_rng(spec.seed)
    labels = np.arange(spec.n) % spec.classes
    rng.shuffle(labels)

    planted = rng.standard_normal(spec.n)
    if spec.property_kind == "binary":
        planted = (planted > np.median(planted)).astype(float)
    independent = rng.standard_normal(spec.n)

    logits = 2.0 * (labels[:, None] == np.arange(spec.classes)[None, :])
    logits = logits + 0.5 * rng.standard_normal((spec.n, spec.classes))
    logits[:, target] += spec.effect_size * planted

    specs = (
        PropertySpec("planted", PLANTED_ABBR, "custom", spec.property_kind, "p_dep"),
        PropertySpec("independent", INDEPENDENT_ABBR, "custom", "scalar", "p_ind"),
    )
    dataset = Dataset(
        class_names=class_names,
        true_label=labels.astype(np.int64),
        logits=logits,
        properties={PLANTED_ABBR: planted, INDEPENDENT_ABBR: independent},
        sample_id=tuple(f"s{i:05d}" for i in range(spec.n)),
        property_specs=specs,
    ).validate()

    cells = {}
    for prop in (PLANTED_ABBR, INDEPENDENT_ABBR):
        for name in class_names:
            cells[(prop, name)] = (
                prop == PLANTED_ABBR and name == class_names[target] and spec.effect_size > 0
            )
    return dataset, GroundTruth(cells=cells)


def _preprocess(values, kind):
    if kind == "binary":
        return np.asarray(values, dtype=float)
    return standardize(values).values


def calibration_run(tests, spec: ScmSpec, trials: int, alpha: float, warn=None):
    """Measure each test's rejection rate over independent trials.

    ``tests`` maps a test id to ``fn(x, y, z, seed) -> TestOutcome``; the
    per-trial seed is derived from the spec seed so trial order is irrelevant.
    Returns a report dict with rates, 95% binomial confidence intervals, and
    the raw p-values (for uniformity checks).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if warn is None:
        warn = lambda msg: None
    if trials < 50:
        warn(f"trials={trials} is below the recommended minimum of 50")

    p_values = {tid: [] for tid in tests}
    failures = {tid: [] for tid in tests}
    for t in range(trials):
        trial_seed = derive_seed(spec.seed, "trial", t)
        x, y, z, _ = generate_scm_dataset(replace(spec, seed=trial_seed))
        xs = _preprocess(x, spec.property_kind)
        ys = standardize(y).values
        zs = standardize(z).values
        for tid, fn in tests.items():
            try:
                outcome = fn(xs, ys, zs, derive_seed(trial_seed, tid))
                p_values[tid].append(outcome.p_value)
            except Exception as exc:  # counted, not fatal
                failures[tid].append(f"trial {t}: {exc}")

    report = {
        "spec": {
            "kind": spec.kind,
            "n": spec.n,
            "effect_size": spec.effect_size,
            "noise_std": spec.noise_std,
            "property_kind": spec.property_kind,
            "seed": spec.seed,
        },
        "trials": trials,
        "alpha": alpha,
        "tests": {},
    }
    for tid in tests:
        ps = np.asarray(p_values[tid])
        completed = ps.size
        rate = float(np.mean(ps < alpha)) if completed else float("nan")
        half = 1.96 * np.sqrt(rate * (1 - rate) / completed) if completed else float("nan")
        report["tests"][tid] = {
            "rejection_rate": rate,
            "ci_low": max(0.0, rate - half) if completed else None,
            "ci_high": min(1.0, rate + half) if completed else None,
            "completed_trials": completed,
            "failures": failures[tid],
            "p_values": [float(p) for p in p_values[tid]],
        }
    return report
