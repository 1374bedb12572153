"""Training, scoring and multi-seed experiment tables."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..audio import Waveform
from ..errors import ConfigError, DataError, NumericError
from ..metrics import ScoreSet, compute_eer, compute_min_tdcf, write_scores
from ..model import BONA_FIDE, SPOOF, build_model, cm_scores
from ..numerics import Adam, Tensor, checkpoint, no_grad, weighted_cross_entropy
from ..rawboost import apply_strategy, utterance_rng
from .data import AudioStore, parse_protocol, prepare_segment

log = logging.getLogger(__name__)


def _require(path, what):
    if path is None:
        raise ConfigError(f"[paths] {what} is not set")
    if not Path(path).exists():
        raise DataError(f"{what} not found: {path}")
    return Path(path)


class Inputs:
    """Builds model inputs for protocol entries: waveform segments or feature matrices."""

    def __init__(self, cfg, audio_dir):
        self.cfg = cfg
        self.features = cfg.model.front_end == "ssl_file"
        self.store = AudioStore(audio_dir, features=self.features)
        self._eval_cache = {}

    def training(self, entry, seed, epoch):
        x = self.store.get(entry.utterance_id)
        if self.features:
            return x
        rng = utterance_rng(seed, entry.utterance_id, epoch)
        if self.cfg.da_strategy != "none":
            x = apply_strategy(Waveform(x), self.cfg.rawboost, rng).samples
        return prepare_segment(x, self.cfg.model.segment_length, rng)

    def evaluation(self, entry):
        uid = entry.utterance_id
        if uid not in self._eval_cache:
            x = self.store.get(uid)
            self._eval_cache[uid] = x if self.features else \
                prepare_segment(x, self.cfg.model.segment_length)
        return self._eval_cache[uid]


def _stack(arrays, entries):
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise DataError(f"inputs in one batch differ in shape {sorted(shapes)}; "
                        f"first utterance {entries[0].utterance_id}")
    return np.stack(arrays)


def score_entries(model, inputs, entries, batch_size):
    """CM scores for ``entries`` in order, model in eval mode."""
    model.eval()
    out = []
    with no_grad():
        for i in range(0, len(entries), batch_size):
            chunk = entries[i:i + batch_size]
            x = _stack([inputs.evaluation(e) for e in chunk], chunk)
            out.append(cm_scores(model(Tensor(x))))
    return np.concatenate(out) if out else np.zeros(0)


def score_set_for(entries, scores):
    return ScoreSet([e.utterance_id for e in entries], scores, [e.label for e in entries],
                    [e.condition for e in entries])


@dataclass
class SeedRun:
    seed: int
    checkpoint: Path
    epochs: list = field(default_factory=list)

    @property
    def final_dev_eer(self):
        evaluated = [e["dev_eer"] for e in self.epochs if e.get("dev_eer") is not None]
        return evaluated[-1] if evaluated else None


@dataclass
class TrainResult:
    config_label: str
    runs: list
    log_path: Path

    @property
    def dev_eers(self):
        return [r.final_dev_eer for r in self.runs]

    def summary(self):
        eers = [e for e in self.dev_eers if e is not None]
        return {"best_dev_eer": min(eers) if eers else None,
                "average_dev_eer": float(np.mean(eers)) if eers else None}


def run_dir(cfg, seed):
    return Path(cfg.paths.out_dir) / cfg.name / f"seed{seed}"


def train_seed(cfg, seed, train_inputs=None, dev_inputs=None, progress=None):
    """Train one seed; writes ``model.spnc`` under ``run_dir(cfg, seed)``."""
    entries = parse_protocol(_require(cfg.paths.train_protocol, "train_protocol"))
    if not entries:
        raise DataError("training protocol is empty")
    train_inputs = train_inputs or Inputs(cfg, _require(cfg.paths.train_audio, "train_audio"))
    dev_entries = None
    if cfg.paths.dev_protocol is not None and cfg.dev_every > 0:
        dev_entries = parse_protocol(_require(cfg.paths.dev_protocol, "dev_protocol"))
        dev_inputs = dev_inputs or Inputs(cfg, _require(cfg.paths.dev_audio, "dev_audio"))

    model = build_model(cfg.model, seed)
    opt = Adam(model.parameters(), lr=cfg.learning_rate)
    weights = np.array(cfg.class_weights)
    run = SeedRun(seed, run_dir(cfg, seed) / "model.spnc")
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        model.train()
        order = np.random.default_rng([seed, epoch]).permutation(len(entries))
        losses = []
        for b in range(0, len(order), cfg.batch_size):
            batch = [entries[i] for i in order[b:b + cfg.batch_size]]
            x = _stack([train_inputs.training(e, seed, epoch) for e in batch], batch)
            labels = [BONA_FIDE if e.is_bona else SPOOF for e in batch]
            loss = weighted_cross_entropy(model(Tensor(x)), labels, weights)
            if not math.isfinite(loss.item()):
                raise NumericError(
                    f"non-finite loss at seed {seed}, epoch {epoch + 1}, batch {b // cfg.batch_size}"
                    f" (first utterance {batch[0].utterance_id}); try a lower learning_rate")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        record = {"epoch": epoch + 1, "loss": float(np.mean(losses)), "dev_eer": None}
        last = epoch + 1 == cfg.epochs
        if dev_entries and ((epoch + 1) % cfg.dev_every == 0 or last):
            scores = score_entries(model, dev_inputs, dev_entries, cfg.batch_size)
            record["dev_eer"] = compute_eer(score_set_for(dev_entries, scores))[0]
        record["seconds"] = round(time.perf_counter() - start, 3)
        run.epochs.append(record)
        log.info("seed %d epoch %d loss %.5f dev EER %s", seed, epoch + 1, record["loss"],
                 "-" if record["dev_eer"] is None else f"{100 * record['dev_eer']:.2f}%")
        if progress is not None:
            progress(seed, record)
    run.checkpoint.parent.mkdir(parents=True, exist_ok=True)
    checkpoint.save(run.checkpoint, model.state_dict())
    return run, model


def train(cfg, progress=None):
    """Train every seed in ``cfg``; writes ``train_log.json`` with per-seed dev EERs."""
    train_inputs = Inputs(cfg, _require(cfg.paths.train_audio, "train_audio"))
    dev_inputs = None
    if cfg.paths.dev_protocol is not None:
        dev_inputs = Inputs(cfg, _require(cfg.paths.dev_audio, "dev_audio"))
    runs = [train_seed(cfg, s, train_inputs, dev_inputs, progress)[0] for s in cfg.seeds]
    log_path = Path(cfg.paths.out_dir) / cfg.name / "train_log.json"
    result = TrainResult(cfg.label, runs, log_path)
    payload = {"experiment": cfg.name, "label": cfg.label,
               "runs": [{"seed": r.seed, "checkpoint": str(r.checkpoint), "epochs": r.epochs,
                         "final_dev_eer": r.final_dev_eer} for r in runs],
               **result.summary()}
    log_path.parent.mkdir(parents=True, exist_ok=True)
    log_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return result


def load_model(cfg, checkpoint_path, seed=0):
    _require(checkpoint_path, "checkpoint")
    model = build_model(cfg.model, seed)
    try:
        model.load_state_dict(checkpoint.load(checkpoint_path))
    except (KeyError, ValueError) as exc:
        raise DataError(f"{checkpoint_path}: checkpoint does not fit the configured model: {exc}") \
            from None
    return model


def score(cfg, checkpoint_path, protocol, audio_dir, out_path, model=None):
    """Write one ``utterance_id<TAB>score`` line per protocol entry, in protocol order."""
    entries = parse_protocol(_require(protocol, "eval_protocol"))
    model = model or load_model(cfg, checkpoint_path)
    inputs = Inputs(cfg, _require(audio_dir, "eval_audio"))
    scores = score_entries(model, inputs, entries, cfg.batch_size)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    write_scores(out_path, [e.utterance_id for e in entries], scores)
    return score_set_for(entries, scores)


# -- experiment matrix --------------------------------------------------------------

@dataclass
class MatrixRow:
    label: str
    eers: list
    tdcfs: list = None

    @property
    def best_eer(self):
        return min(self.eers)

    @property
    def average_eer(self):
        return float(np.mean(self.eers))


@dataclass
class MatrixTable:
    rows: list

    @property
    def has_tdcf(self):
        return any(r.tdcfs is not None for r in self.rows)

    def header(self):
        cols = ["experiment", "seeds", "best_eer_%", "avg_eer_%"]
        return cols + (["best_min_tdcf", "avg_min_tdcf"] if self.has_tdcf else [])

    def records(self):
        out = []
        for r in self.rows:
            rec = [r.label, str(len(r.eers)), f"{100 * r.best_eer:.3f}", f"{100 * r.average_eer:.3f}"]
            if self.has_tdcf:
                rec += ([f"{min(r.tdcfs):.4f}", f"{np.mean(r.tdcfs):.4f}"] if r.tdcfs
                        else ["-", "-"])
            out.append(rec)
        return out

    def to_text(self):
        """Result rows in the ``best (average)`` layout."""
        lines = []
        width = max([len(r.label) for r in self.rows] + [10])
        for r in self.rows:
            line = f"{r.label:<{width}}  EER {100 * r.best_eer:6.2f} ({100 * r.average_eer:6.2f})"
            if r.tdcfs:
                line += f"  min t-DCF {min(r.tdcfs):.4f} ({np.mean(r.tdcfs):.4f})"
            lines.append(line)
        return "\n".join(lines)

    def to_tsv(self):
        return "\n".join("\t".join(x) for x in [self.header()] + self.records()) + "\n"


def evaluate_runs(cfg, runs, protocol, audio_dir, tag="eval"):
    """Score every trained seed on a protocol; returns per-seed ScoreSets."""
    sets = []
    for run in runs:
        out = run.checkpoint.parent / f"{tag}_scores.txt"
        sets.append(score(cfg, run.checkpoint, protocol, audio_dir, out))
    return sets


def run_experiment_matrix(cfgs, protocol=None, audio_dir=None, progress=None):
    """Train and evaluate each config across its seeds; one table row per config.

    Evaluation uses each config's eval paths unless ``protocol``/``audio_dir``
    override them. The t-DCF columns appear only for configs carrying one.
    """
    rows = []
    for cfg in cfgs:
        result = train(cfg, progress)
        sets = evaluate_runs(cfg, result.runs, protocol or cfg.paths.eval_protocol,
                             audio_dir or cfg.paths.eval_audio)
        eers = [compute_eer(s)[0] for s in sets]
        tdcfs = [compute_min_tdcf(s, cfg.tdcf)[0] for s in sets] if cfg.tdcf else None
        rows.append(MatrixRow(cfg.label if cfg.name == "experiment" else cfg.name, eers, tdcfs))
    return MatrixTable(rows)
