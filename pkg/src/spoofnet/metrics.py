"""Evaluation: EER, min t-DCF, per-condition breakdowns and significance tests.

Scores are oriented so that higher means more bona fide. A trial is a miss
when a bona fide score falls below the threshold and a false alarm when a
spoof score is at or above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ParseError

BONAFIDE, SPOOF = "bonafide", "spoof"
SHARED_TAGS = ("", "-")


@dataclass
class ScoreSet:
    utterance_ids: list
    scores: np.ndarray
    labels: list
    conditions: list = field(default=None)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        n = self.scores.size
        if self.conditions is None:
            self.conditions = ["-"] * n
        if not (len(self.utterance_ids) == len(self.labels) == len(self.conditions) == n):
            raise ValueError("score set columns differ in length")
        bad = sorted({l for l in self.labels if l not in (BONAFIDE, SPOOF)})
        if bad:
            raise ValueError(f"unknown labels: {', '.join(bad)}")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")

    @property
    def is_bona(self):
        return np.array([l == BONAFIDE for l in self.labels], dtype=bool)

    def bona_scores(self):
        return self.scores[self.is_bona]

    def spoof_scores(self):
        return self.scores[~self.is_bona]

    def subset(self, mask):
        idx = np.flatnonzero(mask)
        return ScoreSet([self.utterance_ids[i] for i in idx], self.scores[idx],
                        [self.labels[i] for i in idx], [self.conditions[i] for i in idx])

    def __len__(self):
        return self.scores.size


def _split(s, spoof=None):
    if spoof is not None:
        return np.asarray(s, dtype=np.float64).ravel(), np.asarray(spoof, dtype=np.float64).ravel()
    return s.bona_scores(), s.spoof_scores()


def error_curves(bona, spoof):
    """Thresholds (each distinct score, then +inf) with miss and false-alarm rates."""
    if bona.size == 0 or spoof.size == 0:
        raise ValueError("error rates need at least one bona fide and one spoof score")
    thresholds = np.append(np.unique(np.concatenate([bona, spoof])), np.inf)
    miss = np.searchsorted(np.sort(bona), thresholds, side="left") / bona.size
    fa = (spoof.size - np.searchsorted(np.sort(spoof), thresholds, side="left")) / spoof.size
    return thresholds, miss, fa


def compute_eer(s, spoof=None):
    """(EER, threshold) from a ScoreSet, or from bona fide and spoof arrays.

    The threshold is the first sweep point where the miss rate reaches the
    false-alarm rate; the EER interpolates linearly between that point and
    the one before it.
    """
    bona, spoof = _split(s, spoof)
    thr, miss, fa = error_curves(bona, spoof)
    k = int(np.argmax(miss >= fa))
    if miss[k] == fa[k] or k == 0:
        return float(miss[k]), float(thr[k])
    d0 = fa[k - 1] - miss[k - 1]
    d1 = fa[k] - miss[k]
    lam = d0 / (d0 - d1)
    return float(miss[k - 1] + lam * (miss[k] - miss[k - 1])), float(thr[k])


@dataclass(frozen=True)
class TdcfParams:
    """Cost model and fixed ASV operating point. Values are external inputs."""

    p_target: float
    p_nontarget: float
    p_spoof: float
    c_miss: float
    c_fa: float
    c_fa_spoof: float
    asv_miss: float
    asv_fa: float
    asv_spoof_fa: float

    def __post_init__(self):
        problems = []
        priors = (self.p_target, self.p_nontarget, self.p_spoof)
        if any(p < 0 for p in priors) or abs(sum(priors) - 1.0) > 1e-9:
            problems.append(f"priors must be non-negative and sum to 1, got {priors}")
        for name in ("c_miss", "c_fa", "c_fa_spoof"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0")
        for name in ("asv_miss", "asv_fa", "asv_spoof_fa"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        if not problems:
            c0, c1, c2 = self.coefficients()
            if c1 < 0 or c2 < 0 or c0 + min(c1, c2) <= 0:
                problems.append("cost model gives a non-positive trivial-system cost")
        if problems:
            raise ConfigError("invalid t-DCF parameters: " + "; ".join(problems))

    @classmethod
    def from_mapping(cls, mapping):
        names = [f for f in cls.__dataclass_fields__]
        missing = [n for n in names if n not in mapping]
        unknown = sorted(set(mapping) - set(names))
        if missing or unknown:
            raise ConfigError(f"[tdcf] missing keys {missing}, unknown keys {unknown}")
        return cls(**{n: float(mapping[n]) for n in names})

    def coefficients(self):
        c0 = self.p_target * self.c_miss * self.asv_miss + self.p_nontarget * self.c_fa * self.asv_fa
        c1 = self.p_target * self.c_miss - c0
        c2 = self.p_spoof * self.c_fa_spoof * self.asv_spoof_fa
        return c0, c1, c2


def tdcf_curve(s, params, spoof=None):
    """Normalised t-DCF at every sweep threshold."""
    bona, spoof = _split(s, spoof)
    thr, miss, fa = error_curves(bona, spoof)
    c0, c1, c2 = params.coefficients()
    return thr, (c0 + c1 * miss + c2 * fa) / (c0 + min(c1, c2))


def compute_min_tdcf(s, params, spoof=None):
    """Minimum over thresholds of the normalised tandem detection cost."""
    thr, curve = tdcf_curve(s, params, spoof)
    k = int(np.argmin(curve))
    return float(curve[k]), float(thr[k])


# -- breakdown ---------------------------------------------------------------------

@dataclass
class ConditionResult:
    eer: float
    threshold: float
    n_bona: int
    n_spoof: int


def breakdown_by_condition(s):
    """Per-condition EERs plus a ``"pooled"`` entry over every record.

    Records tagged "-" (or empty) are shared by all conditions; typically the
    bona fide trials. A condition lacking one class reports a NaN EER.
    """
    shared = np.array([c in SHARED_TAGS for c in s.conditions])
    tags = sorted({c for c in s.conditions if c not in SHARED_TAGS})
    out = {}
    for tag in tags:
        sub = s.subset(shared | np.array([c == tag for c in s.conditions]))
        out[tag] = _condition_result(sub)
    out["pooled"] = _condition_result(s)
    return out


def _condition_result(s):
    nb, ns = int(s.is_bona.sum()), int((~s.is_bona).sum())
    if nb == 0 or ns == 0:
        return ConditionResult(float("nan"), float("nan"), nb, ns)
    eer, thr = compute_eer(s)
    return ConditionResult(eer, thr, nb, ns)


# -- significance ------------------------------------------------------------------

def holm_bonferroni(p_values, alpha=0.05):
    """Step-down Holm rejections, returned in the input order and shape."""
    p = np.asarray(p_values, dtype=np.float64)
    flat = p.ravel()
    m = flat.size
    reject = np.zeros(m, dtype=bool)
    for rank, i in enumerate(np.argsort(flat, kind="stable")):
        if flat[i] <= alpha / (m - rank):
            reject[i] = True
        else:
            break
    return reject.reshape(p.shape)


def error_count(s):
    """Misclassified trials at the run's own EER threshold, and the trial count."""
    _, thr = compute_eer(s)
    bona = s.is_bona
    wrong = np.sum(s.scores[bona] < thr) + np.sum(s.scores[~bona] >= thr)
    return int(wrong), len(s)


def two_proportion_z(e1, n1, e2, n2):
    """(z, two-sided p) for the difference between two error proportions."""
    pooled = (e1 + e2) / (n1 + n2)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    if se == 0:
        return 0.0, 1.0
    z = (e1 / n1 - e2 / n2) / se
    return z, math.erfc(abs(z) / math.sqrt(2))


@dataclass
class SignificanceMatrix:
    z: np.ndarray
    p_values: np.ndarray
    significant: np.ndarray
    error_rates_a: list
    error_rates_b: list
    alpha: float

    def grid(self):
        """Text grid: rows are runs of A, columns runs of B; '*' marks significance."""
        header = "      " + " ".join(f"B{j + 1:<9d}" for j in range(self.p_values.shape[1]))
        rows = [header]
        for i, prow in enumerate(self.p_values):
            cells = [f"{p:9.3g}{'*' if s else ' '}" for p, s in zip(prow, self.significant[i])]
            rows.append(f"A{i + 1:<4d} " + " ".join(cells))
        return "\n".join(rows)


def pairwise_significance(runs_a, runs_b, alpha=0.05):
    counts_a = [error_count(r) for r in runs_a]
    counts_b = [error_count(r) for r in runs_b]
    z = np.zeros((len(runs_a), len(runs_b)))
    p = np.ones_like(z)
    for i, (ea, na) in enumerate(counts_a):
        for j, (eb, nb) in enumerate(counts_b):
            z[i, j], p[i, j] = two_proportion_z(ea, na, eb, nb)
    return SignificanceMatrix(z, p, holm_bonferroni(p, alpha),
                              [e / n for e, n in counts_a], [e / n for e, n in counts_b], alpha)


# -- score and key files ------------------------------------------------------------

def write_scores(path, utterance_ids, scores):
    lines = [f"{u}\t{float(s)!r}\n" for u, s in zip(utterance_ids, scores)]
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_scores(path):
    """Ordered ``{utterance_id: score}`` from a tab-separated score file."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(f"{path}: expected 'utterance_id<TAB>score'", line=lineno)
        try:
            value = float(parts[1])
        except ValueError:
            raise ParseError(f"{path}: score {parts[1]!r} is not a number", line=lineno) from None
        if not math.isfinite(value):
            raise ParseError(f"{path}: non-finite score", line=lineno)
        if parts[0] in out:
            raise ParseError(f"{path}: duplicate utterance {parts[0]!r}", line=lineno)
        out[parts[0]] = value
    return out


def write_key(path, utterance_ids, labels, conditions=None):
    conditions = conditions or ["-"] * len(labels)
    Path(path).write_text("".join(f"{u}\t{l}\t{c}\n" for u, l, c in
                                  zip(utterance_ids, labels, conditions)), encoding="utf-8")


def read_key(path):
    """``{utterance_id: (label, condition)}``; the condition column may be omitted."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise ParseError(f"{path}: expected 'utterance_id<TAB>label<TAB>condition'", line=lineno)
        if parts[1] not in (BONAFIDE, SPOOF):
            raise ParseError(f"{path}: unknown label {parts[1]!r}", line=lineno)
        out[parts[0]] = (parts[1], parts[2] if len(parts) == 3 else "-")
    return out


def join_scores(scores, key):
    """ScoreSet over the scored utterances, in score-file order."""
    missing = [u for u in scores if u not in key]
    if missing:
        raise DataError(f"{len(missing)} scored utterances missing from the key, e.g. {missing[0]!r}")
    ids = list(scores)
    return ScoreSet(ids, [scores[u] for u in ids], [key[u][0] for u in ids],
                    [key[u][1] for u in ids])


def load_score_set(score_path, key_path):
    return join_scores(read_scores(score_path), read_key(key_path))
