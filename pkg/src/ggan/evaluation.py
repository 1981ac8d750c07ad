"""Testing procedures T1 and T2 plus report/decision-log emission.

T1 scores the two discriminator heads independently: label accuracy on
the labeled test set, realness accuracy on real unlabeled test profiles
(target real) mixed with freshly generated profiles (target fake).

T2 simulates deployment on the labeled test set: step 1 gates profiles
through the realness head (accuracy ``acc1``); step 2 measures label
accuracy among the gated-in profiles only (``acc2``, undefined when
nothing passes the gate).

Evaluation never mutates the model. Argmax ties resolve to index 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import GganError
from .model import FAKE_INDEX, REAL_INDEX, GganModel, discriminate, generate, sample_noise
from .snp_data import LABEL_CLASSES

REALNESS_CLASSES = ("fake", "real")


@dataclass(frozen=True)
class T1Result:
    acc_labeled: float
    acc_unlabeled: float
    n_labeled: int
    n_real: int
    n_synthetic: int


@dataclass(frozen=True)
class T2Result:
    acc1: float
    acc2: float | None  # undefined when n_passed == 0
    n_passed: int
    n_total: int


@dataclass(frozen=True)
class EvalReport:
    model_id: str
    t1: T1Result | None
    t2: T2Result
    sizes: Mapping[str, int]
    seed: int
    subset_provenance: Mapping | None = None

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "t1": None
            if self.t1 is None
            else {"acc_labeled": self.t1.acc_labeled, "acc_unlabeled": self.t1.acc_unlabeled},
            "t2": {
                "acc1": self.t2.acc1,
                "acc2": self.t2.acc2,
                "n_passed": self.t2.n_passed,
            },
            "sizes": dict(self.sizes),
            "seed": self.seed,
            "subset_provenance": dict(self.subset_provenance)
            if self.subset_provenance is not None
            else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_dict(d: Mapping) -> "EvalReport":
        sizes = d["sizes"]
        t1 = None
        if d.get("t1") is not None:
            t1 = T1Result(
                acc_labeled=d["t1"]["acc_labeled"],
                acc_unlabeled=d["t1"]["acc_unlabeled"],
                n_labeled=sizes.get("labeled_test", 0),
                n_real=sizes.get("unlabeled_test", 0),
                n_synthetic=sizes.get("synthetic", 0),
            )
        t2 = T2Result(
            acc1=d["t2"]["acc1"],
            acc2=d["t2"]["acc2"],
            n_passed=d["t2"]["n_passed"],
            n_total=sizes.get("labeled_test", 0),
        )
        return EvalReport(
            model_id=d["model_id"],
            t1=t1,
            t2=t2,
            sizes=dict(sizes),
            seed=d["seed"],
            subset_provenance=d.get("subset_provenance"),
        )

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        return EvalReport.from_dict(json.loads(text))


def _require_profiles(x: np.ndarray, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] == 0:
        raise GganError(f"{what} must be a non-empty (batch, n_snps, 1) array")
    return x


def t1_evaluate(
    model: GganModel,
    x_labeled: np.ndarray,
    y_labeled: np.ndarray,
    x_unlabeled: np.ndarray,
    synthetic_count: int | None = None,
    rng: np.random.Generator | None = None,
) -> T1Result:
    """Independent per-head accuracies.

    ``y_labeled`` holds class indices (0 = DF, 1 = SD).
    ``synthetic_count`` defaults to the unlabeled test size; pass 0 to
    score the realness head on real profiles only.
    """
    x_labeled = _require_profiles(x_labeled, "labeled test set")
    x_unlabeled = _require_profiles(x_unlabeled, "unlabeled test set")
    y = np.asarray(y_labeled, dtype=np.int64)
    if y.shape != (x_labeled.shape[0],):
        raise GganError("labels must be one class index per labeled test profile")
    if synthetic_count is None:
        synthetic_count = x_unlabeled.shape[0]
    if synthetic_count < 0:
        raise GganError(f"synthetic_count must be >= 0, got {synthetic_count}")
    if synthetic_count > 0 and rng is None:
        raise GganError("an rng is required when synthetic profiles are evaluated")

    label_probs, _ = discriminate(model, x_labeled)
    acc_labeled = float((label_probs.argmax(axis=1) == y).mean())

    _, realness_real = discriminate(model, x_unlabeled)
    correct = int((realness_real.argmax(axis=1) == REAL_INDEX).sum())
    total = x_unlabeled.shape[0]
    if synthetic_count > 0:
        noise = sample_noise(synthetic_count, model.noise_dim, rng)
        fakes = generate(model, noise)
        _, realness_fake = discriminate(model, fakes)
        correct += int((realness_fake.argmax(axis=1) == FAKE_INDEX).sum())
        total += synthetic_count
    return T1Result(
        acc_labeled=acc_labeled,
        acc_unlabeled=correct / total,
        n_labeled=x_labeled.shape[0],
        n_real=x_unlabeled.shape[0],
        n_synthetic=synthetic_count,
    )


def t2_evaluate(model: GganModel, x_labeled: np.ndarray, y_labeled: np.ndarray) -> T2Result:
    """Two-step deployment check on the labeled test set."""
    x_labeled = _require_profiles(x_labeled, "labeled test set")
    y = np.asarray(y_labeled, dtype=np.int64)
    if y.shape != (x_labeled.shape[0],):
        raise GganError("labels must be one class index per labeled test profile")

    label_probs, realness_probs = discriminate(model, x_labeled)
    passed = realness_probs.argmax(axis=1) == REAL_INDEX
    n_passed = int(passed.sum())
    acc1 = float(passed.mean())
    if n_passed == 0:
        return T2Result(acc1=acc1, acc2=None, n_passed=0, n_total=x_labeled.shape[0])
    correct = label_probs.argmax(axis=1)[passed] == y[passed]
    return T2Result(
        acc1=acc1,
        acc2=float(correct.mean()),
        n_passed=n_passed,
        n_total=x_labeled.shape[0],
    )


def make_report(
    model_id: str,
    t1: T1Result | None,
    t2: T2Result,
    seed: int,
    subset_provenance: Mapping | None = None,
) -> EvalReport:
    sizes = {"labeled_test": t2.n_total}
    if t1 is not None:
        sizes["labeled_test"] = t1.n_labeled
        sizes["unlabeled_test"] = t1.n_real
        sizes["synthetic"] = t1.n_synthetic
    return EvalReport(
        model_id=model_id,
        t1=t1,
        t2=t2,
        sizes=sizes,
        seed=seed,
        subset_provenance=subset_provenance,
    )


def decision_log(
    model: GganModel, x: np.ndarray, sample_ids: Sequence[str]
) -> list[dict]:
    """Per-profile head outputs and decisions, for audit."""
    x = _require_profiles(x, "profiles")
    if len(sample_ids) != x.shape[0]:
        raise GganError("one sample id per profile is required")
    label_probs, realness_probs = discriminate(model, x)
    rows = []
    for i, sid in enumerate(sample_ids):
        rows.append(
            {
                "sample_id": sid,
                "p_df": float(label_probs[i, 0]),
                "p_sd": float(label_probs[i, 1]),
                "p_fake": float(realness_probs[i, FAKE_INDEX]),
                "p_real": float(realness_probs[i, REAL_INDEX]),
                "label_pred": LABEL_CLASSES[int(label_probs[i].argmax())],
                "realness_pred": REALNESS_CLASSES[int(realness_probs[i].argmax())],
            }
        )
    return rows


def write_decision_log(rows: Sequence[Mapping], path: str | Path) -> None:
    columns = ("sample_id", "p_df", "p_sd", "p_fake", "p_real", "label_pred", "realness_pred")
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in columns) + "\n")
