"""Exit criteria, one test per criterion.

Each test records a PASS/FAIL line that ``conftest.pytest_terminal_summary``
prints at the end of the run.
"""

import contextlib
import io
import statistics
import time

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE_RESULTS, GOLDEN_ETA
from lsgs.cli import main
from lsgs.distortion import DistortionStats, stats_to_table
from lsgs.distribution import (
    DistributionConfig,
    build_distribution,
    distribution_from_scores,
)
from lsgs.kernel import KernelConfig, build_gram, smooth_direct, smooth_spectral
from lsgs.latent_io import (
    LatentDump,
    dump_from_bytes,
    dump_to_bytes,
    read_distortion_csv,
    read_distribution_csv,
    write_distortion_csv,
    write_distribution_csv,
)
from lsgs.sampler import ScenarioSampler
from lsgs.scenarios import enumerate_scenarios
from lsgs.toy import (
    PARAM_SHAPES,
    ToyModel,
    TrainConfig,
    generate_dataset,
    loss_and_grads,
    macro_iou,
    run_experiment,
)

SPACE = enumerate_scenarios(3)
K = SPACE.K
E2E_SEEDS = (0, 1, 2, 3, 4)


@contextlib.contextmanager
def criterion(number, title, budget):
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        ACCEPTANCE_RESULTS.append(f"FAIL  {number}. {title} ({elapsed:.2f}s): {exc}")
        raise
    elapsed = time.perf_counter() - start
    if elapsed > budget:
        ACCEPTANCE_RESULTS.append(f"FAIL  {number}. {title}: {elapsed:.2f}s > {budget}s budget")
        pytest.fail(f"runtime {elapsed:.2f}s exceeds {budget}s")
    ACCEPTANCE_RESULTS.append(f"PASS  {number}. {title} ({elapsed:.2f}s)")
    print(ACCEPTANCE_RESULTS[-1])


def test_c1_golden_krr_fixture():
    with criterion(1, "golden KRR fixture: direct vs Gauss-Jordan, spectral vs direct <= 1e-9", 1.0):
        oracle = np.array(oracles.krr_scores(GOLDEN_ETA, 1.0, 1e-3))
        system = build_gram(GOLDEN_ETA, KernelConfig(1.0, 1e-3))
        direct = smooth_direct(system, GOLDEN_ETA, 1e-3).r
        spectral = smooth_spectral(system, GOLDEN_ETA, 1e-3).r
        assert np.abs(direct - oracle).max() <= 1e-9
        assert np.abs(spectral - direct).max() <= 1e-9


def test_c2_dual_path_sweep():
    with criterion(2, "dual-path sweep: 200 triples, |direct-spectral| <= 1e-8, residual <= 1e-9", 5.0):
        rng = np.random.default_rng(20260101)
        worst_gap = worst_residual = 0.0
        for i in range(200):
            eta = rng.uniform(0, 1, K)
            sigma = (0.25, 1.0, 4.0)[i % 3]
            lam = (1e-6, 1e-3, 1.0)[(i // 3) % 3]
            system = build_gram(eta, KernelConfig(sigma, lam))
            U, w = system.eigenvectors, system.eigenvalues
            worst_residual = max(worst_residual, np.abs(U @ np.diag(w) @ U.T - system.gram).max())
            d = smooth_direct(system, eta, lam).r
            s = smooth_spectral(system, eta, lam).r
            worst_gap = max(worst_gap, np.abs(d - s).max())
        assert worst_gap <= 1e-8, worst_gap
        assert worst_residual <= 1e-9, worst_residual


def test_c3_distribution_laws():
    with criterion(3, "distribution laws on 500 score vectors", 5.0):
        rng = np.random.default_rng(3)
        for _ in range(500):
            r = rng.normal(scale=rng.uniform(0.01, 10), size=K)
            dcfg = DistributionConfig(tau=rng.uniform(0.05, 3.0), gamma=rng.uniform(0, 1))
            p = distribution_from_scores(SPACE, r, r, dcfg).p
            assert abs(p.sum() - 1.0) <= 1e-12
            assert (p >= (1 - dcfg.gamma) / K).all()
            for c in (0.5, 3.0):
                for b in (-2.0, 7.0):
                    q = distribution_from_scores(SPACE, r, c * r + b, dcfg).p
                    assert np.abs(q - p).max() <= 1e-12
            zero = distribution_from_scores(SPACE, r, r, DistributionConfig(dcfg.tau, 0.0)).p
            assert zero.tolist() == [1 / K] * K
        for value in (0.0, 0.3, 5.0):
            assert build_distribution([value] * K).p.tolist() == [1 / K] * K


def test_c4_lambda_to_zero():
    with criterion(4, "lambda -> 0: well-separated eta, lambda=1e-10, |r - nu| <= 1e-6", 1.0):
        # gaps of 0.3 keep the smallest Gram eigenvalue (~4e-7) far above lambda
        eta = np.array([0.0, 0.3, 0.6, 0.9, 1.2, 1.5, 1.8])
        system = build_gram(eta, KernelConfig(1.0, 1e-10))
        assert system.eigenvalues[-1] > 1e3 * 1e-10
        r = smooth_direct(system, eta, 1e-10).r
        assert np.abs(r - eta).max() <= 1e-6


def test_c5_sampler_law():
    with criterion(5, "sampler law: 20 distributions x 1e5 draws, |freq - p| <= 0.01; determinism", 10.0):
        rng = np.random.default_rng(5)
        for i in range(20):
            p = rng.dirichlet(np.ones(K))
            sampler = ScenarioSampler(SPACE, p, seed=1000 + i)
            draws = [sampler.draw().bits - 1 for _ in range(100_000)]
            freq = np.bincount(draws, minlength=K) / 100_000
            assert np.abs(freq - p).max() <= 0.01
        a = ScenarioSampler(SPACE, p, seed=7).draw_many(1000)
        b = ScenarioSampler(SPACE, p, seed=7).draw_many(1000)
        assert a == b


def test_c6_gradient_check():
    with criterion(6, "toy gradients vs central differences (h=1e-5), rel. error <= 1e-4 per block", 10.0):
        train, _ = generate_dataset(11, 4, 1)
        model = ToyModel.initialize(13)
        rng = np.random.default_rng(0)
        for name, v in model.params.items():
            if name.startswith("b"):
                v[:] = rng.normal(scale=0.1, size=v.shape)
        mask = SPACE.full
        _, analytic = loss_and_grads(model, train.X, train.y, mask)
        h = 1e-5
        worst = 0.0
        for name in PARAM_SHAPES:
            flat = model.params[name].reshape(-1)
            numeric = np.empty_like(flat)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + h
                up, _ = loss_and_grads(model, train.X, train.y, mask)
                flat[i] = old - h
                down, _ = loss_and_grads(model, train.X, train.y, mask)
                flat[i] = old
                numeric[i] = (up - down) / (2 * h)
            a = analytic[name].reshape(-1)
            err = np.linalg.norm(a - numeric) / max(np.linalg.norm(a), np.linalg.norm(numeric))
            worst = max(worst, err)
            assert err <= 1e-4, (name, err)


def test_c7_end_to_end_toy():
    with criterion(7, "end-to-end toy experiment over 5 seeds", 25 * 60.0):
        missing_mod0 = {m for m in SPACE if not m.available(0)}
        gaps = []
        for seed in E2E_SEEDS:
            report = run_experiment(TrainConfig(), seed, n_train=512, n_eval=256)
            p = report.distribution.p
            top2 = {SPACE[k] for k in np.argsort(-p, kind="stable")[:2]}
            assert top2 <= missing_mod0, (seed, p)
            assert report.stats.eta[SPACE.full_index] == 0.0
            assert p[SPACE.full_index] == p.min(), (seed, p)
            gaps.append(macro_iou(report.metrics["guided"]) - macro_iou(report.metrics["uniform"]))
        median_gap = statistics.median(gaps)
        print(f"guided - uniform macro IoU per seed: {[round(g, 5) for g in gaps]}, median {median_gap:+.5f}")
        assert median_gap >= -0.005


def test_c8_format_round_trips(tmp_path):
    with criterion(8, "format round-trips and malformed-input exit codes", 5.0):
        rng = np.random.default_rng(8)
        for _ in range(25):
            M = int(rng.integers(1, 5))
            lat = rng.normal(size=(int(rng.integers(0, 6)), 2**M - 1, int(rng.integers(1, 9))))
            dump = LatentDump(M, lat.astype(np.float32))
            data = dump_to_bytes(dump)
            assert dump_to_bytes(dump_from_bytes(data)) == data

            eta = np.append(rng.exponential(size=2**M - 2), 0.0)
            stats = DistortionStats(enumerate_scenarios(M), eta, int(rng.integers(1, 1000)))
            buf = io.StringIO()
            write_distortion_csv(stats_to_table(stats), buf)
            again = io.StringIO()
            write_distortion_csv(read_distortion_csv(io.StringIO(buf.getvalue())), again)
            assert again.getvalue() == buf.getvalue()

            if M >= 2:
                dist = build_distribution(eta, space=enumerate_scenarios(M))
                buf = io.StringIO()
                write_distribution_csv(dist, buf)
                again = io.StringIO()
                write_distribution_csv(read_distribution_csv(io.StringIO(buf.getvalue())), again)
                assert again.getvalue() == buf.getvalue()

        good = tmp_path / "good.lsgs"
        good.write_bytes(dump_to_bytes(LatentDump(3, np.ones((2, 7, 3), dtype=np.float32))))
        truncated = tmp_path / "trunc.lsgs"
        truncated.write_bytes(good.read_bytes()[:-4])
        magic = tmp_path / "magic.lsgs"
        magic.write_bytes(b"LSGX" + good.read_bytes()[4:])
        out = str(tmp_path / "o.csv")
        assert main(["distort", "--latents", str(good), "--out", out]) == 0
        assert main(["distort", "--latents", str(truncated), "--out", out]) == 1
        assert main(["distort", "--latents", str(magic), "--out", out]) == 1
        bad_csv = tmp_path / "bad.csv"
        bad_csv.write_text("scenario_mask,mean_distortion,n_samples\n111,0.5,3\n")
        assert main(["weigh", "--distortions", str(bad_csv), "--out", out]) == 1
        assert main(["weigh", "--distortions", out, "--sigma", "-1", "--out", out]) == 2
        with pytest.raises(SystemExit) as exc:
            main(["weigh", "--unknown"])
        assert exc.value.code == 2
