"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`. Criteria 6 and 7 train
the full desk-scale ablation twice and dominate the runtime; everything
else completes in a couple of minutes.
"""

import csv
import os
import statistics
import time

import numpy as np
import pytest

import oracles
from scanet.attention import (SCAConfig, ca_block, make_ca_block,
                              make_sca_block, sca_block)
from scanet.checkpoint import load_checkpoint, save_checkpoint
from scanet.cli import main
from scanet.config import RunConfig, decoder_config, encoder_config
from scanet.model import (build_model, diagonal_similarity, f1_score,
                          model_param_count, segmentation_metrics)
from scanet.tensor import Tensor, directional_avg_pool, global_avg_pool
from scanet.verify import run_suite


def _ok(n, msg):
    print(f"\nCRITERION {n} PASS: {msg}")


def test_criterion_1_sca_forward_oracle_equivalence():
    t0 = time.perf_counter()
    cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
    worst = 0.0
    for draw in range(20):
        blk = make_sca_block(np.random.default_rng(1000 + draw), 8, 8, cfg,
                             stride=1, dtype=np.float64, name=f"acc{draw}")
        x = Tensor(np.random.default_rng(2000 + draw)
                   .standard_normal((1, 8, 5, 7)))
        got = sca_block(x, blk).data
        want = oracles.sca_block_loops(x.data, blk)
        worst = max(worst, float(np.max(np.abs(got - want))))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-12, f"worst |diff| {worst:.3e}"
    assert elapsed < 10.0, f"took {elapsed:.1f}s"
    _ok(1, f"20 draws, worst |forward - oracle| = {worst:.2e}, "
           f"{elapsed:.1f}s < 10s")


def test_criterion_2_gradient_suite():
    t0 = time.perf_counter()
    results = run_suite(seed=0)
    elapsed = time.perf_counter() - t0
    worst_name, worst = max(results, key=lambda kv: kv[1])
    failing = [(n, e) for n, e in results if e >= 1e-5]
    blocks = [n for n, _ in results if "_block/" in n]
    for variant in ("sa_block", "ca_block", "sca_block"):
        assert sum(n.startswith(variant) for n in blocks) >= 5
    assert not failing, f"failing items: {failing}"
    assert elapsed < 120.0, f"took {elapsed:.1f}s"
    _ok(2, f"{len(results)} items, worst rel err {worst:.2e} ({worst_name}), "
           f"{elapsed:.0f}s < 120s")


def test_criterion_3_mean_consistency():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        shape = (int(rng.integers(1, 4)), int(rng.integers(1, 6)),
                 int(rng.integers(1, 12)), int(rng.integers(1, 12)))
        x = Tensor(rng.standard_normal(shape))
        g = global_avg_pool(x).data
        sh, sw = directional_avg_pool(x)
        worst = max(worst,
                    float(np.max(np.abs(sh.data.mean(axis=2) - g))),
                    float(np.max(np.abs(sw.data.mean(axis=2) - g))))
    assert worst <= 1e-12
    _ok(3, f"100 tensors, worst |row/col mean - global mean| = {worst:.2e}")


def test_criterion_4_metric_oracle_and_f1_rows():
    rng = np.random.default_rng(4)
    for _ in range(100):
        prob = rng.random((1, 1, 16, 16))
        target = (rng.random((1, 1, 16, 16)) > rng.uniform(0.3, 0.8))
        rec = segmentation_metrics(prob, target.astype(float), 0.5)
        iou, p, r, f1 = oracles.metrics_by_sets(prob > 0.5, target)
        assert (rec.iou, rec.precision, rec.recall, rec.f1) == (iou, p, r, f1)
    assert round(100 * f1_score(0.9592, 0.9567), 2) == 95.79
    assert round(100 * f1_score(0.8838, 0.8430), 2) == 86.29
    _ok(4, "100 random masks match set counting exactly; "
           "F1(95.92, 95.67) = 95.79 and F1(88.38, 84.30) = 86.29")


def test_criterion_5_parameter_ordering_with_checkpoint_audit(tmp_path):
    cfg = RunConfig()
    counts = {}
    for variant in ("baseline", "sa", "ca", "sca"):
        mp = build_model(encoder_config(cfg, variant=variant),
                         decoder_config(cfg), 0, np.float32)
        counts[variant] = model_param_count(mp)
        path = tmp_path / f"{variant}.ckpt"
        save_checkpoint(path, mp.parameters())
        audit = sum(a.size for a in load_checkpoint(path).values())
        assert audit == counts[variant], variant
    assert counts["baseline"] < counts["sca"] <= counts["ca"]
    _ok(5, f"baseline {counts['baseline']} < sca {counts['sca']} "
           f"<= ca {counts['ca']}; checkpoint audits match exactly")


@pytest.fixture(scope="module")
def desk_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk") / "data"
    cfg_path = root.parent / "desk.cfg"
    cfg_path.write_text(f"data_root = {root}\n")
    assert main(["gen", "--config", str(cfg_path)]) == 0
    return root


def _run_ablation(desk_dataset, out_root):
    cfg_path = out_root / "ablate.cfg"
    cfg_path.write_text(f"data_root = {desk_dataset}\n"
                        f"out_root = {out_root}\n")
    code = main(["ablate", "--config", str(cfg_path),
                 "--variants", "baseline,sa,sca", "--workers", "2"])
    assert code == 0
    rows = list(csv.DictReader(open(out_root / "ablate.csv")))
    by_variant = {}
    for r in rows:
        by_variant.setdefault(r["variant"], {})[int(r["seed"])] = float(r["iou"])
    return by_variant


@pytest.fixture(scope="module")
def first_ablation(desk_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("ablation_a")
    t0 = time.perf_counter()
    by_variant = _run_ablation(desk_dataset, out)
    elapsed = time.perf_counter() - t0
    return by_variant, elapsed, out


@pytest.mark.slow
def test_criterion_6_ablation_trend(first_ablation):
    by_variant, elapsed, _ = first_ablation
    med = {v: statistics.median(list(by_variant[v].values()))
           for v in by_variant}
    gap = (med["sca"] - med["baseline"]) * 100.0
    seeds = sorted(by_variant["sca"])
    sca_wins = sum(by_variant["sca"][s] >= by_variant["sa"][s] for s in seeds)
    assert gap >= 0.5, f"sca - baseline median gap {gap:.2f} IoU points"
    assert sca_wins >= 2, f"sca >= sa in only {sca_wins}/3 seeds"
    assert elapsed <= 45 * 60, f"ablation took {elapsed / 60:.1f} min"
    _ok(6, f"median IoU baseline {med['baseline']:.4f} sa {med['sa']:.4f} "
           f"sca {med['sca']:.4f}; gap {gap:.2f} pts >= 0.5; "
           f"sca >= sa in {sca_wins}/3 seeds; {elapsed / 60:.1f} min <= 45")


@pytest.mark.slow
def test_criterion_7_ablation_determinism(desk_dataset, first_ablation,
                                          tmp_path_factory):
    _, _, out_a = first_ablation
    out_b = tmp_path_factory.mktemp("ablation_b")
    _run_ablation(desk_dataset, out_b)
    compared = 0
    for variant in ("baseline", "sa", "sca"):
        for seed in (1, 2, 3):
            a = (out_a / f"{variant}_seed{seed}" / "metrics.csv").read_bytes()
            b = (out_b / f"{variant}_seed{seed}" / "metrics.csv").read_bytes()
            assert a == b, f"{variant} seed {seed} metrics.csv differs"
            compared += 1
    _ok(7, f"{compared} metrics.csv files bitwise identical across reruns")


def test_criterion_8_similarity_matrix_properties():
    rng = np.random.default_rng(8)
    for _ in range(10):
        f = rng.standard_normal((1, 6, 7, 9))
        sim = diagonal_similarity(f)
        want = oracles.diagonal_similarity_loops(f)
        assert np.max(np.abs(sim - want)) <= 1e-12
        assert np.max(np.abs(sim - sim.T)) <= 1e-15
        assert np.all(sim >= -1.0) and np.all(sim <= 1.0)
        assert np.max(np.abs(np.diag(sim) - 1.0)) <= 1e-12
    const = diagonal_similarity(np.full((1, 4, 6, 6), 3.0))
    assert np.max(np.abs(const - 1.0)) <= 1e-12
    _ok(8, "symmetric, unit diagonal, in [-1,1], constant input all ones, "
           "matches independent recomputation <= 1e-12")


def test_criterion_9_ca_degeneracy_bitwise():
    cfg = SCAConfig(cardinality=2, radix=2, reduction=2)
    for draw in range(20):
        blk = make_ca_block(np.random.default_rng(9000 + draw), 6, 6, cfg,
                            name=f"deg{draw}")
        x = Tensor(np.random.default_rng(9500 + draw)
                   .standard_normal((1, 6, 4, 6)))
        a = ca_block(x, blk).data
        b = sca_block(x, blk).data
        assert np.array_equal(a, b), f"draw {draw} not bitwise identical"
    _ok(9, "ca_block == sca_block(K=1, R=1) bitwise over 20 instances")
