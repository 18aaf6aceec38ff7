import csv
import json
import math

import numpy as np
import pytest
from oracles import plain_dp_means

from gdpmeans import dataio
from gdpmeans.cli import (
    SweepConfig,
    compression_ratio,
    main,
    run_cell,
    run_sweep,
    shuffle_orders,
)
from gdpmeans.divergences import DivergenceSpec, SquaredDistance


@pytest.fixture
def labeled_csv(tmp_path):
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 0.3, (15, 2)), rng.normal(3, 0.3, (15, 2))])
    path = tmp_path / "d.csv"
    with open(path, "w") as fh:
        fh.write("u,v,class\n")
        fh.writelines(f"{a},{b},{'ab'[i // 15]}\n" for i, (a, b) in enumerate(X))
    return path


def run_json(capsys, argv):
    assert main(argv) == 0
    return json.loads(capsys.readouterr().out)


def test_cluster_smoke(capsys, labeled_csv):
    out = run_json(
        capsys,
        ["cluster", "--input", str(labeled_csv), "--label", "class", "--f", "pow", "--beta", "1", "--a", "0",
         "--div", "sqdist-avg", "--lambda", "0.5"],
    )
    assert out["K"] >= 1 and len(out["labels"]) == 30
    assert 0 <= out["nmi"] <= 1
    assert out["divergence"] == "sqdist/L"


def test_cluster_huge_lambda_one_cluster(capsys, labeled_csv):
    out = run_json(capsys, ["cluster", "--input", str(labeled_csv), "--label", "class", "--lambda", "1e9"])
    assert out["K"] == 1


def test_cluster_effective_beta_metadata(capsys, tmp_path):
    path = tmp_path / "w.csv"
    rng = np.random.default_rng(1)
    np.savetxt(path, rng.normal(size=(12, 8)), delimiter=",")
    out = run_json(capsys, ["cluster", "--input", str(path), "--f", "lse", "--beta-star", "5", "--lambda", "3"])
    assert out["metadata"]["effective_beta"] == 1.5
    assert out["f"] == "lse(beta=1.5)"


def test_cluster_nonfinite_objective_written_as_null(capsys, tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("0\n1\n")
    out = run_json(capsys, ["cluster", "--input", str(path), "--f", "pow", "--beta", "200", "--lambda", "100"])
    assert out["objective"] is None
    assert out["centers"] == [[pytest.approx(0.5, abs=1e-6)]]


def test_input_error_exit_code(capsys, tmp_path):
    assert main(["cluster", "--input", str(tmp_path / "missing.csv"), "--lambda", "1"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "input_error"


def test_domain_error_exit_code(capsys, tmp_path):
    path = tmp_path / "neg.csv"
    path.write_text("-1\n2\n")
    assert main(["cluster", "--input", str(path), "--div", "alpha", "--alpha", "1", "--lambda", "1"]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "domain_error"


def test_numerical_error_exit_code(capsys, tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("1\n")
    argv = ["influence", "--f", "pow", "--beta", "3", "--input", str(path), "--x-star", "2", "--out-dir", str(tmp_path)]
    assert main(argv) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "singular_g"


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as exc:
        main(["cluster", "--f", "nope"])
    assert exc.value.code == 2


# -- sweep ------------------------------------------------------------------


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_sweep_bookkeeping(tmp_path, labeled_csv):
    out = tmp_path / "s"
    argv = ["sweep", "--input", str(labeled_csv), "--label", "class", "--beta", "0.5", "--shuffles", "1",
            "--lambda", "2", "1", "0.5", "--out-dir", str(out)]
    assert main(argv) == 0
    rows = read_rows(out / "sweep.csv")
    assert rows[0] == ["beta", "lambda", "mean_K", "mean_NMI", "mean_maxdist"]
    assert len(rows) == 4
    meta = json.loads((out / "sweep_meta.json").read_text())
    assert meta["K_true"] == 2


def test_sweep_deterministic_bytes(tmp_path, labeled_csv):
    outs = []
    for name in ("a", "b"):
        argv = ["sweep", "--input", str(labeled_csv), "--label", "class", "--beta", "0", "1", "--a", "1", "--shuffles", "2",
                "--lambda-decay", "1.5", "--seed", "4", "--out-dir", str(tmp_path / name)]
        assert main(argv) == 0
        outs.append(((tmp_path / name / "sweep.csv").read_bytes(), (tmp_path / name / "sweep_meta.json").read_bytes()))
    assert outs[0] == outs[1]


def _sweep_fixture(labeled_csv, **kw):
    ds = dataio.standardize(dataio.load_csv(labeled_csv, "class"))
    cfg = SweepConfig(betas=kw.pop("betas", (1.0,)), f_kind="pow", a=0.0, div=DivergenceSpec(SquaredDistance()), **kw)
    return ds, cfg


def test_lambda_schedule_ratio(labeled_csv):
    ds, cfg = _sweep_fixture(labeled_csv, n_shuffles=1)
    lams = [r.lam for r in run_sweep(cfg, ds)["rows"]]
    assert len(lams) > 3
    for a, b in zip(lams, lams[1:]):
        assert b == pytest.approx(a / 1.01, rel=1e-13)


def test_sweep_stops_past_k_cap(labeled_csv):
    ds, cfg = _sweep_fixture(labeled_csv, n_shuffles=2, decay=1.2)
    rows = run_sweep(cfg, ds)["rows"]
    assert rows[-1].mean_K > 3 * 2
    assert all(r.mean_K <= 6 for r in rows[:-1])


def test_sweep_beta_one_is_plain_dp_means(labeled_csv):
    ds, cfg = _sweep_fixture(labeled_csv, n_shuffles=3, decay=1.3)
    rows = run_sweep(cfg, ds)["rows"]
    orders = shuffle_orders(ds.n, cfg)
    from gdpmeans.metrics import nmi

    for row in rows[1:]:
        # the first lambda equals the one-cluster maximum distortion, an exact
        # tie that rounding in the mean decides either way
        Ks, nmis = [], []
        for o in orders:
            labels, _ = plain_dp_means(ds.data[o], row.lam)
            Ks.append(labels.max() + 1)
            nmis.append(nmi(labels, ds.true_labels[o]))
        assert row.mean_K == pytest.approx(np.mean(Ks))
        assert row.mean_nmi == pytest.approx(np.mean(nmis))


def test_sweep_cells_order_independent(labeled_csv):
    ds, cfg = _sweep_fixture(labeled_csv, betas=(0.5, 2.0), n_shuffles=2)
    orders = shuffle_orders(ds.n, cfg)
    cells = [(b, lam, s) for b in cfg.betas for lam in (2.0, 0.7) for s in range(2)]
    forward = {c: run_cell(cfg, ds.data, ds.true_labels, c[0], c[1], orders[c[2]]) for c in cells}
    backward = {c: run_cell(cfg, ds.data, ds.true_labels, c[0], c[1], orders[c[2]]) for c in reversed(cells)}
    assert forward == backward


# -- influence --------------------------------------------------------------


def test_influence_power_curves(tmp_path):
    argv = ["influence", "--f", "pow", "--a", "1", "--beta", "-1", "0", "0.25", "0.5", "1.5", "--theta", "0",
            "--out-dir", str(tmp_path)]
    assert main(argv) == 0
    assert len(list(tmp_path.glob("if_*.csv"))) == 5
    report = json.loads((tmp_path / "influence_report.json").read_text())
    labels = [c["robustness_class"] for c in report["curves"]]
    assert labels == ["redescending", "redescending", "redescending", "bounded", "divergent"]


def test_influence_binomial_curve(tmp_path):
    argv = ["influence", "--f", "pow", "--beta", "0.5", "--a", "1", "--div", "binomial", "--binomial-n", "100",
            "--theta", "50", "--out-dir", str(tmp_path)]
    assert main(argv) == 0
    (curve,) = tmp_path.glob("if_*.csv")
    rows = read_rows(curve)[1:]
    assert [float(r[0]) for r in rows] == list(range(101))
    assert all(math.isfinite(float(r[1])) for r in rows)
    report = json.loads((tmp_path / "influence_report.json").read_text())
    assert report["curves"][0]["robustness_class"] is None
    assert "unsupported" in report["curves"][0]


def test_influence_lse_set(tmp_path):
    argv = ["influence", "--f", "lse", "--beta", "-1", "0", "0.5", "2", "--out-dir", str(tmp_path)]
    assert main(argv) == 0
    assert len(list(tmp_path.glob("if_*.csv"))) == 4


def test_influence_with_cluster_data(tmp_path):
    path = tmp_path / "c.csv"
    np.savetxt(path, np.random.default_rng(0).normal(size=200))
    argv = ["influence", "--f", "pow", "--a", "1", "--beta", "0.5", "--input", str(path), "--x-star", "1.5",
            "--out-dir", str(tmp_path)]
    assert main(argv) == 0
    entry = json.loads((tmp_path / "influence_report.json").read_text())["curves"][0]
    assert entry["analytic_if"][0] == pytest.approx(entry["empirical_if"][0], rel=0.05)


# -- quantize ------------------------------------------------------------------


def test_compression_ratio_arithmetic():
    assert round(compression_ratio(86, 1536), 2) == 5.6
    assert abs(compression_ratio(86, 1536) - 5.61) <= 0.02


@pytest.fixture
def small_ppm(tmp_path):
    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, (16, 24, 3), dtype=np.uint8)
    path = tmp_path / "img.ppm"
    dataio.write_ppm(path, img)
    return path, img


def test_quantize_tiny_lambda_is_lossless(tmp_path, small_ppm):
    path, img = small_ppm
    out = tmp_path / "q"
    assert main(["quantize", "--image", str(path), "--lambda", "1e-9", "--out-dir", str(out)]) == 0
    stats = json.loads((out / "quantize.json").read_text())
    assert stats["K"] == stats["n_blocks"] == 6
    assert stats["compression_ratio_percent"] == 100.0
    np.testing.assert_array_equal(dataio.read_ppm(out / "quantized.ppm"), img)


def test_quantize_target_k_newton(tmp_path, small_ppm):
    path, _ = small_ppm
    out = tmp_path / "q"
    argv = ["quantize", "--image", str(path), "--f", "pow", "--beta", "200", "--target-k", "3", "--out-dir", str(out)]
    assert main(argv) == 0
    stats = json.loads((out / "quantize.json").read_text())
    assert stats["K"] == 3
    assert stats["compression_ratio_percent"] == 50.0


def test_quantize_needs_lambda_or_k(tmp_path, small_ppm):
    path, _ = small_ppm
    assert main(["quantize", "--image", str(path), "--out-dir", str(tmp_path)]) == 2
