"""Detection metrics over the two-tier score order, plus the evaluation grid.

AUROC is the Mann-Whitney statistic (ties count half) computed with midranks;
AUPRC is the step-interpolated area under the precision-recall curve with
thresholds at the distinct score values, descending; FPR@TPR is the minimum
false-positive rate over thresholds reaching the target true-positive rate.
The in-distribution class is the positive class and higher scores mean more
in-distribution.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ValidationError
from .imaging import Dataset
from .llcache import join
from .rng import make_rng
from .scoring import (
    LN2,
    Cutoff,
    OodScore,
    conditional_score,
    fit_cutoff,
    lr_score,
    lrat_score,
    passed,
)
from .transforms import TransformFamily, apply_batch, enumerate_family

TRANSFORM_METHODS = ("stir", "shake", "vslat", "hslat", "shake16",
                     "stirshake-coord", "stirshake-indep")
METHODS = ("ll",) + TRANSFORM_METHODS + ("ic-png", "ic-best", "lrat")


def _keys(scores) -> np.ndarray:
    """(tier, value) sort keys as a structured-friendly (n, 2) float array."""
    out = np.empty((len(scores), 2))
    for i, s in enumerate(scores):
        if isinstance(s, OodScore):
            out[i, 0] = int(s.tier)
            out[i, 1] = s.value
        else:
            out[i, 0] = 1.0
            out[i, 1] = float(s)
    return out


def _require(scores, name):
    if len(scores) == 0:
        raise ValidationError(f"{name} scores must be non-empty")


def _midranks(keys: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) of lexicographic (tier, value) keys."""
    order = np.lexsort((keys[:, 1], keys[:, 0]))
    n = keys.shape[0]
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and keys[order[j + 1], 0] == keys[order[i], 0] \
                and keys[order[j + 1], 1] == keys[order[i], 1]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(id_scores, ood_scores) -> float:
    """P(random ID score > random OOD score) + half the tie probability."""
    _require(id_scores, "ID")
    _require(ood_scores, "OOD")
    kid, kood = _keys(id_scores), _keys(ood_scores)
    ranks = _midranks(np.concatenate([kid, kood]))
    n_id, n_ood = kid.shape[0], kood.shape[0]
    rank_sum = ranks[:n_id].sum()
    return (rank_sum - n_id * (n_id + 1) / 2.0) / (n_id * n_ood)


def _threshold_counts(id_scores, ood_scores):
    """Cumulative (tp, fp) per distinct threshold, descending score order."""
    kid, kood = _keys(id_scores), _keys(ood_scores)
    allk = np.concatenate([kid, kood])
    labels = np.concatenate([np.ones(kid.shape[0]), np.zeros(kood.shape[0])])
    order = np.lexsort((allk[:, 1], allk[:, 0]))[::-1]
    sk = allk[order]
    sl = labels[order]
    tps, fps = [], []
    tp = fp = 0
    i = 0
    n = sk.shape[0]
    while i < n:
        j = i
        while j + 1 < n and sk[j + 1, 0] == sk[i, 0] and sk[j + 1, 1] == sk[i, 1]:
            j += 1
        group = sl[i:j + 1]
        tp += int(group.sum())
        fp += group.size - int(group.sum())
        tps.append(tp)
        fps.append(fp)
        i = j + 1
    return np.array(tps, dtype=np.float64), np.array(fps, dtype=np.float64)


def auprc(id_scores, ood_scores) -> float:
    """Step-wise area under precision-recall, ID positive."""
    _require(id_scores, "ID")
    _require(ood_scores, "OOD")
    tps, fps = _threshold_counts(id_scores, ood_scores)
    n_id = float(len(id_scores))
    area = 0.0
    prev_recall = 0.0
    for tp, fp in zip(tps, fps):
        recall = tp / n_id
        precision = tp / (tp + fp)
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return area


def fpr_at_tpr(id_scores, ood_scores, tpr_target: float = 0.8) -> float:
    """Minimum FPR among thresholds achieving TPR >= tpr_target."""
    _require(id_scores, "ID")
    _require(ood_scores, "OOD")
    if not 0.0 < tpr_target <= 1.0:
        raise ValidationError("tpr_target must lie in (0, 1]")
    tps, fps = _threshold_counts(id_scores, ood_scores)
    n_id, n_ood = float(len(id_scores)), float(len(ood_scores))
    best = None
    for tp, fp in zip(tps, fps):
        if tp / n_id >= tpr_target:
            f = fp / n_ood
            best = f if best is None else min(best, f)
    return best if best is not None else 1.0


# -- likelihood sources -------------------------------------------------------

class ModelSource:
    """Per-sample log-likelihoods computed from a trained model on demand."""

    def __init__(self, state, dataset: Dataset, batch_size: int = 64):
        from .density import log_likelihood_batch

        self._ll_batch = log_likelihood_batch
        self.state = state
        self.dataset = dataset
        self.batch_size = batch_size
        self._identity = None
        self._per_transform: dict[str, np.ndarray] = {}

    def __len__(self):
        return len(self.dataset)

    def identity_lls(self) -> np.ndarray:
        if self._identity is None:
            self._identity = self._ll_batch(self.state, self.dataset,
                                            batch_size=self.batch_size)
        return self._identity

    def family_lls(self, family: TransformFamily) -> dict[str, np.ndarray]:
        out = {"identity": self.identity_lls()}
        stack = self.dataset.stack()
        for tid in family:
            key = tid.canonical_id
            if key not in self._per_transform:
                transformed = apply_batch(tid, stack)
                self._per_transform[key] = self._ll_batch(
                    self.state, transformed, batch_size=self.batch_size)
            out[key] = self._per_transform[key]
        return out

    def images(self) -> Dataset:
        return self.dataset


class CacheSource:
    """Per-sample log-likelihoods read from llcache files."""

    def __init__(self, caches, dataset: Dataset | None = None):
        self.caches = list(caches)
        self.dataset = dataset
        ids = []
        seen = set()
        for _, records in self.caches:
            for rec in records:
                if rec.sample_id not in seen:
                    seen.add(rec.sample_id)
                    ids.append(rec.sample_id)
        self.sample_ids = ids

    def __len__(self):
        return len(self.sample_ids)

    def identity_lls(self) -> np.ndarray:
        table = {}
        for _, records in self.caches:
            for rec in records:
                if rec.transform_id == "identity":
                    table[rec.sample_id] = rec.loglik
        missing = [s for s in self.sample_ids if s not in table]
        if missing:
            from .errors import CacheCompletenessError
            raise CacheCompletenessError([(s, "identity") for s in missing])
        return np.array([table[s] for s in self.sample_ids])

    def family_lls(self, family: TransformFamily) -> dict[str, np.ndarray]:
        table = join(self.caches, family)
        missing = [s for s in self.sample_ids if s not in table]
        if missing:
            from .errors import CacheCompletenessError
            raise CacheCompletenessError([(s, "identity") for s in missing])
        tids = ["identity"] + [t for t in family.transform_ids if t != "identity"]
        return {tid: np.array([table[s][tid] for s in self.sample_ids]) for tid in tids}

    def images(self) -> Dataset | None:
        return self.dataset


@dataclass
class IdCase:
    """One in-distribution row of the grid: its likelihood source, the
    training-split identity log-likelihoods (for the cutoff), and optionally a
    background-model source for the likelihood-ratio baseline."""

    name: str
    source: object
    train_lls: np.ndarray
    background: object | None = None


@dataclass
class OodCase:
    name: str
    source: object
    background: object | None = None  # background lls for lrat, cache mode


@dataclass
class EvalGridConfig:
    id_cases: list
    ood_cases: list
    methods: tuple[str, ...] = ("ll", "stir")
    family_seed: int = 0
    cutoff_method: str = "mad3"
    tail_mass: float = 0.005
    conditional: bool = True
    n_eval: int = 5000
    seed: int = 0
    tpr_target: float = 0.8


@dataclass(frozen=True)
class EvalResult:
    id_dataset: str
    ood_dataset: str
    method: str
    auroc: float
    auprc: float
    fpr_at_tpr: float
    tpr_target: float
    n_id: int
    n_ood: int

    def __post_init__(self):
        for name in ("auroc", "auprc", "fpr_at_tpr"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name} out of [0, 1]: {v}")
        if self.n_id <= 0 or self.n_ood <= 0:
            raise ValidationError("counts must be positive")


def _subset(n: int, n_eval: int, seed: int) -> np.ndarray:
    idx = make_rng(seed).permutation(n)
    return np.sort(idx[:min(n, n_eval)])


def _method_scores(method: str, source, subset: np.ndarray, cutoff: Cutoff | None,
                   families: dict[str, TransformFamily], conditional: bool,
                   background) -> list[OodScore]:
    if method == "ll":
        return [passed(v) for v in source.identity_lls()[subset]]
    if method in TRANSFORM_METHODS:
        fam = families[method]
        lls = source.family_lls(fam)
        identity = lls["identity"]
        scores = []
        for i in subset:
            ll_map = {tid: float(arr[i]) for tid, arr in lls.items()}
            agg = lr_score(ll_map, fam)
            if conditional:
                scores.append(conditional_score(ll_map["identity"], agg, cutoff))
            else:
                scores.append(passed(agg))
        return scores
    if method in ("ic-png", "ic-best"):
        from .complexity import best_length, compressed_length_bits

        images = source.images()
        if images is None:
            raise ValidationError(f"method {method} needs image data, not just caches")
        identity = source.identity_lls()
        scores = []
        for i in subset:
            img = images.images[i]
            est = (compressed_length_bits(img, "png") if method == "ic-png"
                   else best_length(img))
            # negated IC score, so higher means more in-distribution
            scores.append(passed(identity[i] / LN2 + est.bits))
        return scores
    if method == "lrat":
        if background is None:
            raise ValidationError("method lrat needs a background model or cache")
        fg = source.identity_lls()
        bg = background.identity_lls()
        if len(fg) != len(bg):
            raise ValidationError("foreground and background caches disagree on samples")
        return [passed(lrat_score(fg[i], bg[i])) for i in subset]
    raise ValidationError(f"unknown method {method!r}")


def eval_grid(config: EvalGridConfig) -> list[EvalResult]:
    """One EvalResult per (ID case, OOD dataset, method)."""
    for m in config.methods:
        if m not in METHODS:
            raise ValidationError(f"unknown method {m!r}")
    families = {m: enumerate_family(m, config.family_seed)
                for m in config.methods if m in TRANSFORM_METHODS}
    results = []
    for case in config.id_cases:
        cutoff = fit_cutoff(case.train_lls, config.cutoff_method, config.tail_mass)
        id_subset = _subset(len(case.source), config.n_eval, config.seed)
        for ood in config.ood_cases:
            ood_subset = _subset(len(ood.source), config.n_eval, config.seed + 1)
            for method in config.methods:
                id_scores = _method_scores(method, case.source, id_subset, cutoff,
                                           families, config.conditional, case.background)
                ood_scores = _method_scores(method, ood.source, ood_subset, cutoff,
                                            families, config.conditional,
                                            ood.background or _paired_background(case, ood.source))
                results.append(EvalResult(
                    id_dataset=case.name, ood_dataset=ood.name, method=method,
                    auroc=auroc(id_scores, ood_scores),
                    auprc=auprc(id_scores, ood_scores),
                    fpr_at_tpr=fpr_at_tpr(id_scores, ood_scores, config.tpr_target),
                    tpr_target=config.tpr_target,
                    n_id=len(id_scores), n_ood=len(ood_scores)))
    return results


def _paired_background(case: IdCase, ood_source):
    """lrat needs background likelihoods for the OOD samples too: reuse the
    case's background model on the OOD images when possible."""
    if case.background is None:
        return None
    if isinstance(case.background, ModelSource):
        images = ood_source.images()
        if images is None:
            return None
        return ModelSource(case.background.state, images,
                           batch_size=case.background.batch_size)
    return None


# -- reports ------------------------------------------------------------------

CSV_COLUMNS = ("id_dataset", "ood_dataset", "method", "auroc", "auprc",
               "fpr_at_tpr", "n_id", "n_ood", "seed")


def write_reports(results, out_dir, seed: int, svg: bool = True) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    csv_path = out_dir / "eval.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in results:
            writer.writerow([r.id_dataset, r.ood_dataset, r.method,
                             repr(r.auroc), repr(r.auprc), repr(r.fpr_at_tpr),
                             r.n_id, r.n_ood, seed])
    paths["csv"] = csv_path
    json_path = out_dir / "eval.json"
    payload = {
        "version": __version__,
        "seed": seed,
        "results": [{
            "id_dataset": r.id_dataset, "ood_dataset": r.ood_dataset,
            "method": r.method, "auroc": r.auroc, "auprc": r.auprc,
            "fpr_at_tpr": r.fpr_at_tpr, "tpr_target": r.tpr_target,
            "n_id": r.n_id, "n_ood": r.n_ood,
        } for r in results],
    }
    json_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    paths["json"] = json_path
    if svg:
        paths["svg"] = _write_svg(results, out_dir / "eval.svg")
    return paths


def _write_svg(results, path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    pairs = sorted({(r.id_dataset, r.ood_dataset) for r in results})
    methods = sorted({r.method for r in results})
    fig, ax = plt.subplots(figsize=(max(6.0, 1.8 * len(pairs)), 4.0))
    width = 0.8 / max(len(methods), 1)
    xs = np.arange(len(pairs))
    for mi, method in enumerate(methods):
        vals = []
        for pair in pairs:
            rs = [r.auroc for r in results
                  if (r.id_dataset, r.ood_dataset) == pair and r.method == method]
            vals.append(rs[0] if rs else np.nan)
        ax.bar(xs + mi * width, vals, width=width, label=method)
    ax.set_xticks(xs + 0.4 - width / 2)
    ax.set_xticklabels([f"{a}\nvs {b}" for a, b in pairs], fontsize=8)
    ax.set_ylabel("AUROC")
    ax.set_ylim(0, 1.05)
    ax.axhline(0.5, color="gray", lw=0.8, ls="--")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
