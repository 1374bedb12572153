"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 3-6 re-run the oracle tests of the unit modules (with every
parametrization); the end-to-end criteria 7-9 train on the toy corpus and
share runs through a module-level cache.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest
import test_aggregation as agg_t
import test_frontend as front_t
import test_graphnet as graph_t
import test_metrics as metrics_t
import test_model as model_t
import test_numerics as num_t
import test_rawboost as boost_t

from spoofnet.metrics import compute_eer
from spoofnet.model import ModelConfig, build_model
from spoofnet.numerics import Tensor, no_grad
from spoofnet.pipeline import Paths, evaluate_runs, train

RESULTS = {}


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is None:
        return
    reporter.write_line("")
    reporter.write_line("acceptance summary")
    for n in sorted(RESULTS):
        reporter.write_line(RESULTS[n])


@contextmanager
def criterion(n, title, budget_s, request):
    """Times the block, enforces the budget and records one summary line."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    start = time.perf_counter()
    detail = {}
    status = "FAIL"
    try:
        yield detail
        elapsed = time.perf_counter() - start
        assert elapsed < budget_s, f"took {elapsed:.1f} s, budget {budget_s} s"
        status = "PASS"
    finally:
        elapsed = time.perf_counter() - start
        extra = "".join(f"; {k} {v}" for k, v in detail.items())
        RESULTS[n] = (f"criterion {n}: {status}  {title}  "
                      f"({elapsed:.1f} s of {budget_s} s{extra})")
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(RESULTS[n])


def run_cases(fn):
    """Call a (possibly parametrized) test function with every parameter set."""
    marks = [m for m in getattr(fn, "pytestmark", []) if m.name == "parametrize"]
    if not marks:
        fn()
        return 1
    names, values = marks[0].args
    names = [s.strip() for s in names.split(",")] if isinstance(names, str) else list(names)
    for v in values:
        fn(**dict(zip(names, v if len(names) > 1 else (v,))))
    return len(values)


# -- 1-6: properties and oracles ---------------------------------------------------------

def test_criterion_1_shape_conformance(request):
    with criterion(1, "reference shape chain", 10, request):
        model = build_model(ModelConfig(), 0)
        trace = {}
        with no_grad():
            out = model(Tensor(np.random.default_rng(0).normal(size=(1, 64_600)) * 0.1), trace)
        assert out.shape == (1, 2)
        for key, shape in model_t.REFERENCE_TRACE.items():
            assert trace[key] == shape, key
        assert trace["res_blocks"] == [(32, 42, 67)] * 2 + [(64, 42, 67)] * 4
        assert trace["branch"] == [((26, 32), (32,))] * 2


def test_criterion_2_gradient_suite(request):
    with criterion(2, "finite-difference gradients, ops and reduced model", 60, request) as d:
        for name in sorted(num_t.OP_CASES):
            num_t.test_op_gradients_match_finite_differences(name)
        num_t.test_conv2d_gradient_on_small_case()
        for fn in (front_t.test_sinc_cutoff_gradients, front_t.test_projection_gradient,
                   front_t.test_resblock_gradients, agg_t.test_attention_path_gradients,
                   graph_t.test_backend_gradients_reduced_dims,
                   model_t.test_end_to_end_gradients_reduced_dims):
            run_cases(fn)
        d["ops"] = len(num_t.OP_CASES)


def test_criterion_3_aggregation_oracle(request):
    with criterion(3, "aggregation equals loop oracles, attention sums to 1", 30, request):
        agg_t.test_max_abs_matches_loop_oracle()
        agg_t.test_weighted_sums_match_loop_oracle()
        agg_t.test_attention_map_is_a_joint_distribution()
        agg_t.test_batched_matches_per_item(3)


def test_criterion_4_graph_oracles(request):
    with criterion(4, "graph modules equal exhaustive oracles; MGO laws", 30, request) as d:
        count = 0
        for fn in (graph_t.test_gat_matches_double_loop_oracle, graph_t.test_pool_matches_sort_oracle,
                   graph_t.test_hs_gal_matches_pairwise_enumeration,
                   graph_t.test_readout_matches_loop_oracle, graph_t.test_mgo_commutative_and_idempotent):
            count += run_cases(fn)
        d["cases"] = count


def test_criterion_5_rawboost_contracts(request):
    with criterion(5, "augmentation contracts", 60, request):
        run_cases(boost_t.test_length_and_seed_determinism)
        boost_t.test_length_preserved_for_any_length()
        boost_t.test_la_strategy_on_silence()
        boost_t.test_convolutive_zero_in_zero_out()
        boost_t.test_impulsive_silence_stays_silent()
        boost_t.test_stationary_snr_contract_over_100_draws()
        run_cases(boost_t.test_notch_attenuates_tone_by_drawn_depth)


def test_criterion_6_metrics_golden(request):
    with criterion(6, "EER, Holm and min t-DCF golden tests", 60, request):
        metrics_t.test_eer_hand_derived_cases()
        run_cases(metrics_t.test_holm_hand_derived_sets)
        metrics_t.test_min_tdcf_bounded_and_invariant_on_random_sets()
        metrics_t.test_tdcf_trivial_systems_bound_the_curve()


# -- 7-9: toy end-to-end -----------------------------------------------------------------------

RUNS = {}


@pytest.fixture(scope="module")
def runs_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance_runs")


def toy_run(toy_cfg, out_dir, backend="aasist", da="none", seed=0):
    """Train (once) one seed of the shipped toy config; returns (cfg, SeedRun, seconds)."""
    key = (backend, da, seed)
    if key not in RUNS:
        extra = {"backend": "simplified", "aggregation": "max_abs"} if backend == "simplified" else {}
        cfg = toy_cfg.replace(name=f"{backend}-{da}", da_strategy=da, seeds=(seed,),
                              paths=Paths(**{**toy_cfg.paths.__dict__, "out_dir": out_dir}),
                              **extra)
        start = time.perf_counter()
        result = train(cfg)
        RUNS[key] = (cfg, result.runs[0], time.perf_counter() - start)
    return RUNS[key]


def test_criterion_7_toy_end_to_end(toy_cfg, runs_dir, request):
    with criterion(7, "toy corpus: both back-ends reach dev EER 0, DA active", 600, request) as d:
        assert toy_cfg.epochs == 20
        for backend in ("aasist", "simplified"):
            cfg, run, seconds = toy_run(toy_cfg, runs_dir, backend)
            eers = [e["dev_eer"] for e in run.epochs]
            first_zero = next((e["epoch"] for e in run.epochs if e["dev_eer"] == 0.0), None)
            d[backend] = f"first zero epoch {first_zero}, final {eers[-1]}, {seconds:.0f} s"
            assert run.final_dev_eer == 0.0
            # scores from the saved checkpoint separate the classes as well
            (scores,) = evaluate_runs(cfg, [run], cfg.paths.eval_protocol, cfg.paths.eval_audio)
            assert compute_eer(scores)[0] == 0.0
        none_cfg, none_run, _ = toy_run(toy_cfg, runs_dir, "aasist", "none")
        la_cfg, la_run, _ = toy_run(toy_cfg, runs_dir, "aasist", "la")
        a = evaluate_runs(none_cfg, [none_run], none_cfg.paths.eval_protocol,
                          none_cfg.paths.eval_audio, "da")[0]
        b = evaluate_runs(la_cfg, [la_run], la_cfg.paths.eval_protocol, la_cfg.paths.eval_audio,
                          "da")[0]
        assert not np.array_equal(a.scores, b.scores)


def test_criterion_8_reproducibility(toy_cfg, tmp_path, request):
    with criterion(8, "identical config and seed give identical bytes", 300, request):
        outputs = []
        for name in ("first", "second"):
            cfg = toy_cfg.replace(name="repro", da_strategy="la", epochs=3, seeds=(1,),
                                  paths=Paths(**{**toy_cfg.paths.__dict__,
                                                 "out_dir": tmp_path / name}))
            run = train(cfg).runs[0]
            evaluate_runs(cfg, [run], cfg.paths.eval_protocol, cfg.paths.eval_audio)
            outputs.append((run.checkpoint.read_bytes(),
                            (run.checkpoint.parent / "eval_scores.txt").read_bytes()))
        assert outputs[0][0] == outputs[1][0], "checkpoints differ"
        assert outputs[0][1] == outputs[1][1], "score files differ"


def test_criterion_9_directional_sanity(toy_cfg, toy_root, runs_dir, request):
    with criterion(9, "held-out noise: DF augmentation EER <= no augmentation", 1200, request) as d:
        means = {}
        for da in ("none", "df"):
            eers = []
            for seed in (0, 1, 2):
                cfg, run, _ = toy_run(toy_cfg, runs_dir, "aasist", da, seed)
                (s,) = evaluate_runs(cfg, [run], cfg.paths.eval_protocol,
                                     toy_root / "eval_noisy", "noisy")
                eers.append(compute_eer(s)[0])
            means[da] = float(np.mean(eers))
            d[da] = f"{100 * means[da]:.2f}% {[round(100 * e, 2) for e in eers]}"
        assert means["df"] <= means["none"]
