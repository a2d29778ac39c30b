"""Acceptance criteria, each at its stated tolerance.

Every test appends one ``PASS``/``FAIL`` line to the terminal summary
(``pytest tests/test_acceptance.py`` prints them at the end).
"""
import math
import statistics
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, uniform
from dctc.alignment import LatentAlignment, collapse, estimate_map_alignment, greedy_decode
from dctc.bench import run_bench
from dctc.checks import run_gradcheck
from dctc.cli import main
from dctc.ctc import ctc_gradient, ctc_loss, lattice_for
from dctc.losses import DctcConfig, ctc_loss_output, dctc_loss
from dctc.toy.synth import SynthConfig, generate_dataset
from dctc.toy.train import TrainConfig, make_schedule, schedule_rng, train
from dctc.types import LabelSequence, Vocabulary

SEEDS = range(5)


def report(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  criterion {n:2d}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.fixture(scope="module")
def oracle_suite():
    t0 = time.perf_counter()
    rep = run_gradcheck(instances=200, seed=0, step=1e-5, tol_loss=1e-9, tol_fd=1e-4)
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def default_data():
    return {s: generate_dataset(SynthConfig(seed=s)) for s in SEEDS}


def test_c01_oracle_loss(oracle_suite):
    rep, secs = oracle_suite
    ok = rep.n_instances >= 200 and rep.max_loss_err <= 1e-9 and secs < 10
    report(1, "oracle equivalence (loss)", ok,
           f"{rep.n_instances} instances, max |exp(-loss) - enum| = {rep.max_loss_err:.2e} (tol 1e-9), "
           f"suite {secs:.1f} s (< 10 s)")
    assert ok


def test_c02_oracle_posterior(oracle_suite):
    rep, _ = oracle_suite
    ok = rep.max_gamma_err <= 1e-9 and rep.max_norm_err <= 1e-9
    report(2, "oracle equivalence (posterior)", ok,
           f"max posterior err {rep.max_gamma_err:.2e}, max |sum - 1| {rep.max_norm_err:.2e} (tol 1e-9)")
    assert ok


def test_c03_gradient(oracle_suite):
    rep, _ = oracle_suite
    ok = rep.max_fd_rel_err <= 1e-4 and rep.max_dctc_fd_rel_err <= 1e-4 and rep.n_dctc_checked > 0
    report(3, "finite-difference gradients", ok,
           f"ctc max rel err {rep.max_fd_rel_err:.2e} on {rep.n_feasible} instances, dctc {rep.max_dctc_fd_rel_err:.2e} "
           f"on {rep.n_dctc_checked} argmin-stable instances (tol 1e-4)")
    assert ok


def test_c04_map_correctness(oracle_suite):
    rep, _ = oracle_suite
    ok = rep.map_mismatches == 0 and rep.map_compared > 0
    report(4, "MAP alignment vs oracle", ok,
           f"{rep.map_mismatches} mismatches over {rep.map_compared} unique-argmax timesteps")
    assert ok


def test_c05_reduction(tmp_path):
    rng = np.random.default_rng(0)
    identical = True
    for _ in range(100):
        K, T = int(rng.integers(1, 6)), int(rng.integers(3, 12))
        U = rng.normal(scale=2.0, size=(K + 1, T))
        y = LabelSequence(tuple(int(c) for c in rng.integers(1, K + 1, size=int(rng.integers(1, 3)))))
        d, c = dctc_loss(U, y, cfg=DctcConfig(0.0)), ctc_loss_output(U, y)
        if not d.feasible:
            continue
        identical &= d.loss.total == c.loss.total and np.array_equal(d.grad_u, c.grad_u)
    data = tmp_path / "data"
    assert main(["gen-data", "--out", str(data), "--n-train", "256", "--n-test", "64"]) == 0
    runs = {}
    for name, flags in (("ctc", ["--loss", "ctc"]), ("dctc0", ["--loss", "dctc", "--lambda", "0"])):
        assert main(["train", "--data", str(data), "--out", str(tmp_path / name), "--epochs", "3",
                     "--log-every", "5", "--seed", "4", *flags]) == 0
        runs[name] = (tmp_path / name / "metrics.csv").read_bytes()
    csv_same = runs["ctc"] == runs["dctc0"]
    ok = identical and csv_same
    report(5, "lambda = 0 reduction", ok,
           f"loss/grad bit-identical on 100 random instances: {identical}; metrics CSV byte-identical: {csv_same}")
    assert ok


def test_c06_hand_examples():
    P2 = uniform(2, 2)
    a = LabelSequence((1,))
    lat = lattice_for(P2, a)
    loss_ok = abs(ctc_loss(P2, a) + math.log(0.75)) <= 1e-12
    g_ok = abs(ctc_gradient(P2, lat)[1, 0] + 1 / 6) <= 1e-12
    z2 = estimate_map_alignment(P2, lat).ids
    P3 = uniform(2, 3)
    z3 = estimate_map_alignment(P3, lattice_for(P3, LabelSequence((1, 1)))).ids
    ok = loss_ok and g_ok and z2 == (1, 1) and z3 == (1, 0, 1)
    report(6, "hand examples", ok,
           f"loss==-log 0.75: {loss_ok}, G(a,1)==-1/6: {g_ok}, z*(T=2)={z2}, z*(T=3,[a,a])={z3}")
    assert ok


def test_c07_early_alignment_quality(default_data):
    t0 = time.perf_counter()
    gaps, early = [], []
    for s in SEEDS:
        train_ds, test_ds = default_data[s]
        cfg = TrainConfig(seed=s)
        total = len(make_schedule(schedule_rng(cfg), len(train_ds), cfg))
        window = int(0.1 * total)
        state = train(None, train_ds, test_ds, cfg, stop_after=window + 1)
        first = state.history[0]
        gaps.append(first["aacc_map"] - first["aacc_self"])
        early.append(max(r["aacc_map"] for r in state.history if r["iter"] <= window))
    secs = time.perf_counter() - t0
    gap, best = statistics.median(gaps), statistics.median(early)
    ok = gap >= 0.2 and best >= 0.90 and secs < 300
    report(7, "early AACC(MAP) trend", ok,
           f"median first-checkpoint AACC(MAP)-AACC(self) = {gap:.3f} (>= 0.2), median best AACC(MAP) in first 10% "
           f"= {best:.3f} (>= 0.90), {secs:.0f} s (< 300 s); per seed gaps {np.round(gaps, 3).tolist()}, "
           f"early {np.round(early, 3).tolist()}")
    assert ok


def test_c08_dctc_not_worse_than_ctc(default_data):
    t0 = time.perf_counter()
    acc = {"ctc": [], "dctc": []}
    for s in SEEDS:
        train_ds, test_ds = default_data[s]
        for kind in acc:
            state = train(None, train_ds, test_ds, TrainConfig(loss_kind=kind, seed=s))
            acc[kind].append(state.history[-1]["test_acc"])
    secs = time.perf_counter() - t0
    med_c, med_d = statistics.median(acc["ctc"]), statistics.median(acc["dctc"])
    mean_diff = float(np.mean(np.subtract(acc["dctc"], acc["ctc"])))
    ok = med_d >= med_c and mean_diff > 0 and secs < 900
    report(8, "final test ACC, DCTC vs CTC", ok,
           f"median dctc {med_d:.4f} vs ctc {med_c:.4f} (need >=), mean improvement {mean_diff:+.4f} (need > 0), "
           f"{secs:.0f} s (< 900 s); ctc {acc['ctc']}, dctc {acc['dctc']}")
    assert ok


def test_c09_decoder():
    v = Vocabulary(("a", "b"))
    cases = [((1, 1, 0, 1), "aa"), ((0, 0), ""), ((1, 0, 1, 2, 2), "aab")]
    examples_ok = all(greedy_decode(LatentAlignment(z), v).text() == t for z, t in cases)
    rng = np.random.default_rng(9)
    prop_ok = True
    for _ in range(1000):
        ids = tuple(int(c) for c in rng.integers(1, 8, size=int(rng.integers(0, 20))))
        path = [0]
        for i in ids:
            path += [i, 0]
        prop_ok &= collapse(path) == ids
    ok = examples_ok and prop_ok
    report(9, "greedy decoder", ok, f"3 examples exact: {examples_ok}; blank-interleave identity on 1000 cases: {prop_ok}")
    assert ok


def test_c10_determinism(tmp_path):
    results = {}
    gen = ["--n-train", "200", "--n-test", "50", "--seed", "11"]
    for rep in ("a", "b"):
        root = tmp_path / rep
        assert main(["gradcheck", "--instances", "50", "--out", str(root / "g")]) == 0
        if rep == "a":
            assert main(["gen-data", "--out", str(root / "d"), *gen]) == 0
            assert main(["train", "--data", str(tmp_path / "a" / "d"), "--out", str(root / "t"),
                         "--epochs", "2", "--log-every", "4"]) == 0
        else:
            # replay from the first run's manifests
            assert main(["gen-data", "--config", str(tmp_path / "a" / "d" / "manifest.json"),
                         "--out", str(root / "d")]) == 0
            assert main(["train", "--config", str(tmp_path / "a" / "t" / "manifest.json"),
                         "--out", str(root / "t")]) == 0
        results[rep] = {p: (root / p).read_bytes() for p in
                        ("g/gradcheck.tsv", "d/train.tsv", "d/test.tsv", "d/vocab.txt", "t/metrics.csv",
                         "t/checkpoint.json")}
    same = {k: results["a"][k] == results["b"][k] for k in results["a"]}
    ok = all(same.values())
    report(10, "byte-identical reruns", ok, ", ".join(f"{k}: {v}" for k, v in same.items()))
    assert ok


def test_c11_bench():
    rep = run_bench(K=100, T=64, L=12, batch=32, repeats=5)
    ratio = rep["dctc_over_ctc"]
    within = ratio <= 2.5
    ok = ratio < 4.0
    note = "within 2.5x" if within else "above 2.5x target, below 4x hard limit"
    report(11, "bench dctc/ctc time ratio", ok,
           f"{ratio:.2f}x ({note}); ctc {rep['ctc_us_per_sample']:.0f} us/sample, "
           f"dctc {rep['dctc_us_per_sample']:.0f} us/sample")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
