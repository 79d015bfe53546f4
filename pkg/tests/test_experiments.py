import json

import numpy as np
import pytest

from rpsubspace import bounds
from rpsubspace.data import generate_union
from rpsubspace.experiments import (ACUTE_TARGETS, COSINE, INNER, OBTUSE_TARGETS, ExperimentReport,
                                    RejectionConfig, attack_demo, derive_seed, inversion_attack,
                                    make_pair_with_cosine, margin_preservation, rejection_curve,
                                    structure_benchmark)
from rpsubspace.geometry import cosine
from rpsubspace.randproj import generate


@pytest.mark.parametrize("gamma", [1.0, 0.37161, -0.92704, 0.019021, -1.0])
def test_pair_with_cosine(gamma):
    x, y = make_pair_with_cosine(300, gamma, 2.5, 7.0, seed=1)
    assert abs(cosine(x, y) - gamma) <= 1e-10
    assert np.linalg.norm(x) == pytest.approx(2.5) and np.linalg.norm(y) == pytest.approx(7.0)


def test_pair_invalid():
    with pytest.raises(ValueError):
        make_pair_with_cosine(10, 1.2, 1, 1, 0)
    with pytest.raises(ValueError):
        make_pair_with_cosine(10, 0.5, 0, 1, 0)


def test_zero_gamma_rejected():
    with pytest.raises(ValueError, match="orthogonal"):
        RejectionConfig(gamma_targets=(0.5, 0.0))


@pytest.mark.parametrize("kwargs", [dict(trials=0), dict(m_grid=()), dict(eps=(1.5,)), dict(mode="angle"),
                                    dict(length_range=(0, 1))])
def test_config_invalid(kwargs):
    with pytest.raises(ValueError):
        RejectionConfig(**kwargs)


def small_config(**kw):
    base = dict(n=60, m_grid=(10, 30, 60), trials=60, eps=(0.1, 0.3), gamma_targets=(0.92349, -0.45916),
                master_seed=3)
    base.update(kw)
    return RejectionConfig(**base)


def test_rejection_schedule_invariant():
    a = rejection_curve(small_config(), workers=1)
    b = rejection_curve(small_config(), workers=3)
    assert a.to_csv() == b.to_csv()
    assert a.to_json() == b.to_json()


def test_rejection_trial_matches_direct_projection():
    cfg = small_config(trials=5, gamma_targets=(0.67809,), eps=(0.2,))
    report = rejection_curve(cfg)
    pair_seed = derive_seed(cfg.master_seed, 1, 0)
    lx, ly = np.random.default_rng(pair_seed).uniform(*cfg.length_range, size=2)
    x, y = make_pair_with_cosine(cfg.n, 0.67809, lx, ly, pair_seed)
    for m in cfg.m_grid:
        rejected = 0
        for t in range(cfg.trials):
            R = generate(cfg.n, m, seed=derive_seed(cfg.master_seed, 2, 0, t)).entries
            ratio = cosine(R @ x, R @ y) / 0.67809
            rejected += not 0.8 <= ratio <= 1.2
        assert report.column("rejected", m=m) == [rejected]


def test_p_hat_nonincreasing_in_eps():
    report = rejection_curve(small_config(eps=(0.05, 0.1, 0.2, 0.3)))
    for g in (0.92349, -0.45916):
        for m in (10, 30, 60):
            p = report.column("p_hat", gamma=g, m=m)
            assert p == sorted(p, reverse=True)


def test_inner_mode_rows():
    report = rejection_curve(small_config(mode=INNER))
    assert set(report.column("mode")) == {INNER}
    assert all(v is None for v in report.column("interval_violation"))


def test_report_formats():
    report = rejection_curve(small_config(trials=10))
    doc = json.loads(report.to_json())
    assert doc["config_hash"] == report.config_hash
    assert len(doc["rows"]) == 12
    lines = report.to_csv().splitlines()
    assert lines[0] == "# kind: rejection"
    header = next(l for l in lines if not l.startswith("#"))
    assert header.split(",")[:4] == ["mode", "eps", "gamma", "m"]
    with pytest.raises(ValueError):
        report.render("xml")


def test_config_hash_tracks_config():
    assert rejection_curve(small_config(trials=5)).config_hash != rejection_curve(small_config(trials=6)).config_hash


def test_cosine_trend_and_failure_bound():
    cfg = RejectionConfig(n=300, m_grid=(60, 300), trials=300, eps=(0.1, 0.3),
                          gamma_targets=(ACUTE_TARGETS[0], ACUTE_TARGETS[3]), master_seed=1)
    report = rejection_curve(cfg)
    for m in (60, 300):
        for e in (0.1, 0.3):
            assert report.column("p_hat", gamma=0.92349, m=m, eps=e)[0] <= \
                report.column("p_hat", gamma=0.019021, m=m, eps=e)[0]
    bound = bounds.cosine_failure_bound(300, 0.3)
    v = report.column("interval_violation", gamma=0.92349, m=300, eps=0.3)[0]
    assert v <= bound + 3 * np.sqrt(bound * (1 - bound) / 300)


def test_benchmark_rows_and_parity():
    X = generate_union(200, 5, 3, 24, seed=0)
    report = structure_benchmark(X, [60], repeats=2)
    methods = report.column("method")
    assert methods == ["none", "rp", "pca"]
    full = report.column("accuracy", method="none")[0]
    assert abs(report.column("accuracy", method="rp")[0] - full) <= 0.02
    assert all(t >= 0 for t in report.column("time_ms"))


def test_benchmark_without_timing_is_reproducible():
    X = generate_union(100, 3, 3, 12, seed=1)
    a = structure_benchmark(X, [30], methods=("rp",), timing=False)
    b = structure_benchmark(X, [30], methods=("rp",), timing=False, workers=2)
    assert a.to_json() == b.to_json()
    assert "time_ms" not in a.columns


def test_benchmark_invalid():
    X = generate_union(30, 2, 2, 6, seed=1)
    with pytest.raises(ValueError):
        structure_benchmark(X, [31])
    with pytest.raises(ValueError):
        structure_benchmark(X, [10], methods=("ica",))


def test_margin_preservation_rows():
    X = generate_union(100, 3, 2, 6, seed=0)
    rows = margin_preservation(X, 0.3, 200, seed=0)
    assert [r["class"] for r in rows] == [1, 2, 3]
    for r in rows:
        assert r["bound"] == pytest.approx(bounds.projected_margin_bound(max(r["gamma"], 0), 0.3))
        assert r["holds"] == (r["projected_gamma"] <= r["bound"])


def test_attack_square_is_exact():
    R = generate(40, 40, seed=3)
    X = np.random.default_rng(0).standard_normal((5, 40))
    report = inversion_attack(R, X @ R.entries.T, X)
    assert max(report.column("rel_error")) <= 1e-6


def test_attack_error_floor_is_row_space_energy():
    R = generate(100, 20, seed=3)
    X = np.random.default_rng(0).standard_normal((5, 100))
    report = inversion_attack(R, X @ R.entries.T, X)
    for err, floor in zip(report.column("rel_error"), report.column("row_space_floor")):
        assert err >= floor - 1e-12
        assert floor > 0.5


def test_attack_without_ground_truth():
    R = generate(10, 4, seed=0)
    report = inversion_attack(R, np.ones((2, 4)))
    assert report.columns == ["index", "template_norm", "reconstruction_norm"]
    with pytest.raises(ValueError):
        inversion_attack(R, np.ones((2, 5)))


def test_attack_demo_subspace_vs_generic():
    # demonstration: knowing the subspace, m >= 4 d ln d rows leave nothing hidden
    m = 4 * 5 * int(np.ceil(np.log(5)))
    generic = attack_demo(200, m, 10, seed=0).column("rel_error")
    structured = attack_demo(200, m, 10, seed=0, subspace_dim=5).column("rel_error")
    assert max(structured) <= 1e-8 < 0.5 <= min(generic)


def test_report_csv_blank_for_none():
    r = ExperimentReport("x", {}, [{"a": 1, "b": None}])
    assert r.to_csv().splitlines()[-1] == "1,"
