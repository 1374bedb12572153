"""Command-line entry point: ``spoofnet <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import metrics
from .audio import read_wav, write_wav
from .errors import ConfigError, SpoofnetError
from .pipeline import (generate_toy_dataset, load_config, run_experiment_matrix, score, train)
from .rawboost import apply_strategy, utterance_rng

log = logging.getLogger("spoofnet")

TOY_CONFIG = """\
# Toy experiment on the synthetic corpus. Hyperparameters are desk-scale
# choices, not the reference ones (see README).
[experiment]
name = "toy"
da_strategy = "none"
learning_rate = 5e-4
batch_size = 16
epochs = 20
seeds = [0]
# the toy corpus is balanced, unlike the 1:9 reference data
class_weights = [1.0, 1.0]

[model]
front_end = "ssl_stub"
aggregation = "self_attentive"
backend = "aasist"
ssl_dim = 32
ssl_hidden = 16
proj_dim = 16
post_pool = [2, 3]
encoder_stages = [[8, 1], [16, 1]]
attention_hidden = 8
gat_dim = 16
hs_dim = 16
branch_dim = 8
simple_dim = 16

[paths]
train_protocol = "protocols/train.txt"
train_audio = "train"
dev_protocol = "protocols/eval.txt"
dev_audio = "eval"
eval_protocol = "protocols/eval.txt"
eval_audio = "eval"
eval_key = "keys/eval.tsv"
out_dir = "runs"

# Example cost model in the style of recent challenge evaluation plans; the
# ASV operating point is illustrative, not measured.
[tdcf]
p_target = 0.9405
p_nontarget = 0.0095
p_spoof = 0.05
c_miss = 1.0
c_fa = 10.0
c_fa_spoof = 10.0
asv_miss = 0.05
asv_fa = 0.03
asv_spoof_fa = 0.4
"""


def _apply_overrides(cfg, args):
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seeds"] = (args.seed,)
    if getattr(args, "epochs", None) is not None:
        changes["epochs"] = args.epochs
    if getattr(args, "strategy", None) is not None:
        changes["da_strategy"] = args.strategy
    if getattr(args, "out", None) is not None and args.command in ("train", "matrix"):
        changes["paths"] = cfg.paths.__class__(**{**cfg.paths.__dict__, "out_dir": Path(args.out)})
    return cfg.replace(**changes) if changes else cfg


def cmd_gen_toy(args):
    paths = generate_toy_dataset(args.out, seed=args.seed if args.seed is not None else 0,
                                 n_train=args.n_train, n_eval=args.n_eval)
    config = Path(args.out) / "toy.toml"
    config.write_text(TOY_CONFIG, encoding="utf-8")
    print(f"wrote {args.n_train} train / {args.n_eval} eval utterances to {paths['root']}")
    print(f"config: {config}")


def cmd_augment(args):
    cfg = load_config(args.config) if args.config else None
    from .rawboost import AugmentationConfig
    aug = cfg.rawboost if cfg else AugmentationConfig()
    if args.strategy:
        aug = AugmentationConfig.from_mapping(
            {k: v for k, v in aug.__dict__.items() if k != "strategy"}, strategy=args.strategy)
    w = read_wav(args.input)
    uid = args.utterance_id or Path(args.input).stem
    out = apply_strategy(w, aug, utterance_rng(args.seed or 0, uid, args.epoch))
    write_wav(args.output, out)
    print(f"{uid}\t{aug.strategy}\t{len(out)} samples -> {args.output}")


def cmd_train(args):
    cfg = _apply_overrides(load_config(args.config), args)

    def progress(seed, rec):
        eer = "-" if rec["dev_eer"] is None else f"{100 * rec['dev_eer']:.3f}"
        print(f"seed\t{seed}\tepoch\t{rec['epoch']}\tloss\t{rec['loss']:.6f}\tdev_eer_%\t{eer}",
              flush=True)

    result = train(cfg, progress)
    summary = result.summary()
    for run in result.runs:
        print(f"checkpoint\t{run.seed}\t{run.checkpoint}")
    fmt = lambda v: "-" if v is None else f"{100 * v:.3f}"  # noqa: E731
    print(f"summary\tbest_dev_eer_%\t{fmt(summary['best_dev_eer'])}\t"
          f"average_dev_eer_%\t{fmt(summary['average_dev_eer'])}")
    if args.report:
        from .report import plot_training_curves
        payload = json.loads(result.log_path.read_text())
        print(f"figure\t{plot_training_curves(payload, Path(args.report) / 'training_curves.png')}",
              file=sys.stderr)


def cmd_score(args):
    cfg = load_config(args.config)
    protocol = args.protocol or cfg.paths.eval_protocol
    audio = args.audio or cfg.paths.eval_audio
    s = score(cfg, args.checkpoint, protocol, audio, args.out)
    print(f"wrote {len(s)} scores to {args.out}")


def _load_set(scores, key):
    return metrics.load_score_set(scores, key)


def cmd_eval(args):
    s = _load_set(args.scores, args.key)
    eer, thr = metrics.compute_eer(s)
    result = {"eer": eer, "threshold": thr, "n_bonafide": int(s.is_bona.sum()),
              "n_spoof": int((~s.is_bona).sum())}
    tdcf = None
    if args.config:
        tdcf = load_config(args.config).tdcf
        if tdcf is None:
            raise ConfigError(f"{args.config} has no [tdcf] section")
        result["min_tdcf"] = metrics.compute_min_tdcf(s, tdcf)[0]
    breakdown = metrics.breakdown_by_condition(s)
    result["breakdown"] = {k: v.__dict__ for k, v in breakdown.items()}
    if args.format == "json":
        print(json.dumps(result, indent=2))
    else:
        print(f"EER\t{100 * eer:.4f}%\tthreshold\t{thr:.6g}")
        if tdcf is not None:
            print(f"min_tDCF\t{result['min_tdcf']:.6f}")
        print("condition\teer_%\tn_bonafide\tn_spoof")
        for k, v in breakdown.items():
            print(f"{k}\t{100 * v.eer:.4f}\t{v.n_bona}\t{v.n_spoof}")
    if args.report:
        from .report import plot_breakdown
        out = Path(args.report)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.json").write_text(json.dumps(result, indent=2) + "\n")
        print(f"figure\t{plot_breakdown(breakdown, out / 'breakdown.png')}", file=sys.stderr)


def cmd_sigtest(args):
    runs_a = [_load_set(p, args.key) for p in args.a]
    runs_b = [_load_set(p, args.key) for p in args.b]
    m = metrics.pairwise_significance(runs_a, runs_b, args.alpha)
    print(m.grid())
    print("run\terror_rate")
    for i, e in enumerate(m.error_rates_a):
        print(f"A{i + 1}\t{e:.6f}")
    for j, e in enumerate(m.error_rates_b):
        print(f"B{j + 1}\t{e:.6f}")
    if args.report:
        from .report import plot_significance
        out = Path(args.report)
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(out / "p_values.tsv", m.p_values, delimiter="\t", fmt="%.6g")
        print(f"figure\t{plot_significance(m, out / 'significance.png')}", file=sys.stderr)


def cmd_matrix(args):
    cfgs = [_apply_overrides(load_config(c), args) for c in args.config]
    table = run_experiment_matrix(cfgs)
    sys.stdout.write(table.to_tsv())
    print(table.to_text(), file=sys.stderr)
    if args.report:
        from .report import plot_matrix_summary
        out = Path(args.report)
        out.mkdir(parents=True, exist_ok=True)
        (out / "matrix.tsv").write_text(table.to_tsv())
        print(f"figure\t{plot_matrix_summary(table, out / 'matrix.png')}", file=sys.stderr)


def build_parser():
    p = argparse.ArgumentParser(prog="spoofnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-toy", help="write the synthetic two-class corpus and a config")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--n-train", type=int, default=200)
    g.add_argument("--n-eval", type=int, default=100)
    g.set_defaults(func=cmd_gen_toy)

    a = sub.add_parser("augment", help="apply an augmentation strategy to one WAV file")
    a.add_argument("input")
    a.add_argument("output")
    a.add_argument("--config")
    a.add_argument("--strategy", choices=["la", "df", "none", "conv", "impulsive", "stationary"])
    a.add_argument("--seed", type=int)
    a.add_argument("--epoch", type=int, default=0)
    a.add_argument("--utterance-id")
    a.set_defaults(func=cmd_augment)

    t = sub.add_parser("train", help="train every seed of a config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, help="train this seed only")
    t.add_argument("--epochs", type=int)
    t.add_argument("--strategy", choices=["la", "df", "none", "conv", "impulsive", "stationary"])
    t.add_argument("--out", help="output directory (overrides [paths] out_dir)")
    t.add_argument("--report", help="directory for the training-curve figure")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("score", help="score a protocol with a checkpoint")
    s.add_argument("--config", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--protocol")
    s.add_argument("--audio")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_score)

    e = sub.add_parser("eval", help="EER, min t-DCF and per-condition breakdown")
    e.add_argument("--scores", required=True)
    e.add_argument("--key", required=True)
    e.add_argument("--config", help="config whose [tdcf] section enables min t-DCF")
    e.add_argument("--format", choices=["text", "json"], default="text")
    e.add_argument("--report")
    e.set_defaults(func=cmd_eval)

    q = sub.add_parser("sigtest", help="pairwise significance between two sets of runs")
    q.add_argument("--a", nargs="+", required=True, help="score files of system A runs")
    q.add_argument("--b", nargs="+", required=True, help="score files of system B runs")
    q.add_argument("--key", required=True)
    q.add_argument("--alpha", type=float, default=0.05)
    q.add_argument("--report")
    q.set_defaults(func=cmd_sigtest)

    m = sub.add_parser("matrix", help="train and evaluate several configs; one row each")
    m.add_argument("--config", nargs="+", required=True)
    m.add_argument("--seed", type=int)
    m.add_argument("--epochs", type=int)
    m.add_argument("--out")
    m.add_argument("--report")
    m.set_defaults(func=cmd_matrix)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except SpoofnetError as exc:
        print(f"spoofnet: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
