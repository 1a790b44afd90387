import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from conftest import GOLDEN_ETA, GOLDEN_P
from lsgs.cli import main
from lsgs.distortion import DistortionStats, stats_to_table
from lsgs.latent_io import (
    LatentDump,
    read_distortion_csv,
    read_distribution_csv,
    write_distortion_csv,
    write_latent_dump,
)
from lsgs.scenarios import enumerate_scenarios

SPACE = enumerate_scenarios(3)


@pytest.fixture
def dump_path(tmp_path):
    lat = np.random.default_rng(0).normal(size=(3, 7, 4)).astype(np.float32)
    path = tmp_path / "lat.lsgs"
    write_latent_dump(LatentDump(3, lat), path)
    return path


@pytest.fixture
def golden_distortions(tmp_path):
    # the full mask (last row) must carry zero distortion, so the golden eta is reversed
    path = tmp_path / "g.csv"
    write_distortion_csv(stats_to_table(DistortionStats(SPACE, GOLDEN_ETA[::-1], 10)), path)
    return path


def test_distort(tmp_path, dump_path):
    out = tmp_path / "d.csv"
    assert main(["distort", "--latents", str(dump_path), "--out", str(out)]) == 0
    table = read_distortion_csv(out)
    assert len(table.rows) == 7 and table.rows[-1].mean_distortion == 0.0
    assert len(out.read_text().splitlines()) == 8


def test_distort_single_sample(tmp_path):
    lat = np.random.default_rng(1).normal(size=(1, 7, 3)).astype(np.float32)
    path = tmp_path / "one.lsgs"
    write_latent_dump(LatentDump(3, lat), path)
    out = tmp_path / "d.csv"
    assert main(["distort", "--latents", str(path), "--out", str(out)]) == 0
    got = [r.mean_distortion for r in read_distortion_csv(out).rows]
    expected = [float(np.mean((lat[0, k].astype(float) - lat[0, -1].astype(float)) ** 2)) for k in range(7)]
    np.testing.assert_allclose(got, expected, rtol=1e-15)


def test_distort_truncated(tmp_path, dump_path, capsys):
    data = dump_path.read_bytes()
    bad = tmp_path / "bad.lsgs"
    bad.write_bytes(data[:-4])
    assert main(["distort", "--latents", str(bad), "--out", str(tmp_path / "x.csv")]) == 1
    assert f"offset {len(data) - 4}" in capsys.readouterr().err


def test_distort_missing_file(tmp_path):
    assert main(["distort", "--latents", str(tmp_path / "nope"), "--out", str(tmp_path / "x")]) == 1


def test_weigh_golden(tmp_path, golden_distortions):
    out = tmp_path / "p.csv"
    assert main(["weigh", "--distortions", str(golden_distortions), "--out", str(out)]) == 0
    rec = read_distribution_csv(out)
    # the kernel pipeline is permutation-equivariant, so reversing eta reverses p
    np.testing.assert_allclose(rec.p, GOLDEN_P[::-1], atol=1e-12)


def test_weigh_gamma_zero(tmp_path, golden_distortions):
    out = tmp_path / "p.csv"
    assert main(["weigh", "--distortions", str(golden_distortions), "--gamma", "0", "--out", str(out)]) == 0
    assert read_distribution_csv(out).p.tolist() == [1 / 7] * 7


@pytest.mark.parametrize(
    "flag", [["--sigma", "-1"], ["--lambda", "0"], ["--tau", "0"], ["--gamma", "1.5"], ["--gamma", "-0.1"]]
)
def test_weigh_bad_hyperparameters(tmp_path, golden_distortions, flag):
    args = ["weigh", "--distortions", str(golden_distortions), "--out", str(tmp_path / "p.csv")]
    assert main(args + flag) == 2


def test_weigh_malformed_csv(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("scenario_mask,mean_distortion,n_samples\n100,1,5\n")
    assert main(["weigh", "--distortions", str(bad), "--out", str(tmp_path / "p.csv")]) == 1


def _write_dist(path, p):
    lines = ["scenario_mask,eta,r,p"]
    for label, v in zip(SPACE.labels, p):
        lines.append(f"{label},0,0,{v!r}")
    path.write_text("\n".join(lines) + "\n")


def test_sample(tmp_path, capsys):
    dist = tmp_path / "u.csv"
    _write_dist(dist, [1 / 7] * 7)
    assert main(["sample", "--dist", str(dist), "--n", "0", "--seed", "1"]) == 0
    assert capsys.readouterr().out == ""
    assert main(["sample", "--dist", str(dist), "--n", "50", "--seed", "3"]) == 0
    first = capsys.readouterr().out
    assert main(["sample", "--dist", str(dist), "--n", "50", "--seed", "3"]) == 0
    assert capsys.readouterr().out == first
    assert len(first.splitlines()) == 50 and set(first.split()) <= set(SPACE.labels)


def test_sample_uniform_counts(tmp_path, capsys):
    dist = tmp_path / "u.csv"
    _write_dist(dist, [1 / 7] * 7)
    assert main(["sample", "--dist", str(dist), "--n", "70000", "--seed", "42"]) == 0
    lines = capsys.readouterr().out.split()
    for label in SPACE.labels:
        assert abs(lines.count(label) - 10_000) <= 500


def test_sample_bad_sum(tmp_path):
    dist = tmp_path / "bad.csv"
    _write_dist(dist, [0.2] * 7)
    assert main(["sample", "--dist", str(dist), "--n", "5"]) == 1


def test_plot(tmp_path):
    dist = tmp_path / "u.csv"
    _write_dist(dist, [1 / 7] * 7)
    svg = tmp_path / "p.svg"
    assert main(["plot", "--dist", str(dist), "--out", str(svg)]) == 0
    root = ET.parse(svg).getroot()
    rects = list(root.iter("{http://www.w3.org/2000/svg}rect"))
    assert len(rects) == 7 and len({r.get("height") for r in rects}) == 1


def test_plot_malformed(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,distribution\n")
    assert main(["plot", "--dist", str(bad), "--out", str(tmp_path / "p.svg")]) == 1


@pytest.mark.parametrize(
    "argv", [["bogus"], ["weigh", "--nope", "1"], ["sample", "--dist", "x"], [], ["toy"]]
)
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_idempotent_outputs(tmp_path, dump_path, golden_distortions):
    outs = []
    for i in range(2):
        d = tmp_path / f"d{i}.csv"
        p = tmp_path / f"p{i}.csv"
        s = tmp_path / f"s{i}.svg"
        assert main(["distort", "--latents", str(dump_path), "--out", str(d)]) == 0
        assert main(["weigh", "--distortions", str(golden_distortions), "--out", str(p)]) == 0
        assert main(["plot", "--dist", str(p), "--out", str(s)]) == 0
        outs.append((d.read_bytes(), p.read_bytes(), s.read_bytes()))
    assert outs[0] == outs[1]


def test_toy_small(tmp_path):
    args = ["toy", "--seed", "1", "--n-train", "32", "--n-eval", "16", "--pretrain-epochs", "2",
            "--finetune-epochs", "1"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert csvs == ["distortions.csv", "distribution.csv", "metrics.csv", "summary.csv", "train_log.csv"]
    for p in a.iterdir():
        assert p.read_bytes() == (b / p.name).read_bytes()
    metrics = (a / "metrics.csv").read_text().splitlines()
    assert metrics[0] == "arm,scenario_mask,iou,f1" and len(metrics) == 15


def test_toy_bad_counts(tmp_path):
    assert main(["toy", "--n-train", "0", "--out", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lsgs", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "weigh" in proc.stdout
