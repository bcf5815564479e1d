"""End-to-end acceptance runs at full size and stated tolerances.

Each test records one PASS/FAIL line; the terminal summary lists them all.
The heavy ensembles are shared through session fixtures.
"""
import numpy as np
import pytest

from stochavg import cli, presets

pytestmark = pytest.mark.slow


def assert_preset(res, record, label, detail=""):
    record(label, res.passed, detail)
    assert res.passed, res.summary()


@pytest.fixture(scope="session")
def generator():
    return presets.oscillator_generator()[1]


@pytest.fixture(scope="session")
def ladder(generator):
    ens, limit, _ = presets.weak_convergence_ensembles(gen=generator)
    return ens, limit


def test_c01_cell_problem_oracle(record_criterion):
    res = presets.cell_problem_oracle(n_polys=20, M=256)
    d = res.data
    assert_preset(res, record_criterion, "C1 cell-problem oracle",
                  f"gap={d['max_gap']:.2e} residual={d['max_residual']:.2e}")


def test_c02_coefficient_oracle(record_criterion):
    res = presets.coefficient_oracle()
    d = res.data
    assert d["points"] == 5 * 5 * 4 * 4
    assert_preset(res, record_criterion, "C2 coefficient oracle",
                  f"dA={d['max_dA']:.2e} dB={d['max_dB']:.2e} |A12|={d['max_abs_A12']:.2e}")


def test_c03_small_action(record_criterion):
    res = presets.small_action()
    d = res.data
    # x-independent noise: D11 = 1/pi^2 independently of h2
    assert d["exact"] == pytest.approx(1 / np.pi ** 2)
    assert_preset(res, record_criterion, "C3 small-action slope",
                  f"slope={d['D11_slope']:.5f} D11={d['D11_direct']:.5f}")


def test_c04_ellipticity(record_criterion):
    res = presets.ellipticity()
    lam = res.data["min_eigenvalue"]
    # analytic minimum a^2 h / pi^2 at h = 0.5, a = 1
    assert lam == pytest.approx(0.5 / np.pi ** 2, rel=0.2)
    assert_preset(res, record_criterion, "C4 ellipticity", f"min eig={lam:.4f}")


def test_c05_weak_convergence(ladder, record_criterion):
    ens, limit = ladder
    assert [e.eps for e in ens] == [0.2, 0.1, 0.05] and all(e.n_paths == 10_000 for e in ens)
    res = presets.weak_convergence(ens, limit, T=1.0)
    print(res.data["table"])
    assert_preset(res, record_criterion, "C5 weak convergence")


def test_c06_martingale_residual(ladder, generator, record_criterion):
    ens, limit = ladder
    res = presets.martingale(ens, limit, generator, T=1.0)
    d = res.data
    detail = "residuals=" + ",".join(f"{v:.4f}" for v in d["residuals"]) + f" self={d['self_residual']:.4f}"
    assert_preset(res, record_criterion, "C6 martingale residual", detail)


def test_c07_occupation(generator, record_criterion):
    res = presets.occupation(generator)
    assert_preset(res, record_criterion, "C7 occupation time", f"R2={res.data['fit']['r_squared']:.3f}")


def test_c08_inaccessibility(generator, record_criterion):
    res = presets.inaccessibility(generator)
    d = res.data
    assert_preset(res, record_criterion, "C8 inaccessibility",
                  f"max Lf={max(d['Lf']):.3f} hits={d['hits']}/{d['n_paths']} min h1={d['min_h1']:.2e}")


def test_c09_openbook_splitting(record_criterion):
    res = presets.openbook_splitting()
    stats = ",".join(f"{s:.4f}" for s in res.data["page_independence"])
    assert_preset(res, record_criterion, "C9 open-book splitting", f"page stats={stats}")


def test_c10_resonance(record_criterion):
    res = presets.resonance_checks()
    assert_preset(res, record_criterion, "C10 resonance scan", f"ratio={res.data['ratio']:.3f}")


REDUCED = [
    ("average", "cell-problem-oracle", {"n_polys": 5}),
    ("resonance", "resonance-scan", {}),
    ("compare", "oscillator-weak-convergence",
     {"n_paths": 200, "eps_ladder": [0.2, 0.1], "T": 0.2, "generator": {"M_w": 16, "M_phi": 8}}),
    ("openbook", "openbook-splitting", None),
]


def test_c11_determinism(tmp_path, record_criterion):
    import yaml

    mismatched = []
    for command, name, options in REDUCED:
        cfg = {"preset": {"name": name, **({"options": options} if options is not None else {})}}
        if name == "openbook-splitting":
            cfg["openbook"] = {"paths_per_page": 40, "distances": [0.1, 0.05], "T_max": 8, "min_hits": 5}
        path = tmp_path / f"{name}.yaml"
        path.write_text(yaml.safe_dump(cfg))
        outs = []
        for run in range(2):
            out = tmp_path / f"{name}-{run}"
            threads = 1 + 2 * run
            assert cli.main([command, "--config", str(path), "--out", str(out), "--seed", "99",
                             "--threads", str(threads)]) == 0
            outs.append(out)
        for f in sorted(p.name for p in outs[0].iterdir()):
            if f == "manifest.json":
                continue  # records the thread count, which differs on purpose
            if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes():
                mismatched.append(f"{name}/{f}")
    record_criterion("C11 determinism", not mismatched, f"mismatched={mismatched}" if mismatched else "")
    assert not mismatched
