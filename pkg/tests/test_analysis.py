import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochavg import analysis, averaging, simulate, systems
from stochavg.errors import CheckpointMismatch, InsufficientHits


def ensemble(H, times, eps=None):
    return simulate.PathEnsemble(times=np.asarray(times, float), H=np.asarray(H, float), eps=eps,
                                 path_ids=np.arange(len(H)))


@pytest.fixture(scope="module")
def bm():
    gen = averaging.GeneratorSpec.constant([[1.0, 0.3], [0.3, 0.5]], [0.1, 0.0], [(-50, 50), (-50, 50)])
    c = simulate.SimulationConfig(dt=0.01, T=1.0, n_paths=4000, master_seed=8, record_dt=0.01)
    return gen, simulate.simulate_limit_diffusion(gen, c, [0.5, 0.5])


# --------------------------------------------------------------- compare

def test_self_comparison_is_zero(bm):
    _, ens = bm
    rep = analysis.moment_compare([ens], ens, t_checkpoints=[0.5, 1.0])
    assert all(r["diff"] == 0 and r["z"] == 0 for r in rep.rows)
    assert rep.passed


def test_unperturbed_against_degenerate_limit():
    oscillators_zero = systems.coupled_oscillator_model(systems.trig_oscillator_spec(amplitudes=(0, 0)))
    c = simulate.SimulationConfig(eps=0.2, dt=4e-4, T=0.2, n_paths=10, record_dt=0.1)
    fast = simulate.simulate_fast_slow(oscillators_zero, c, [1.0, 0.5])
    gen = averaging.GeneratorSpec.constant(np.zeros((2, 2)), [0.0, 0.0], [(0, 2), (0, 2)])
    lim = simulate.simulate_limit_diffusion(gen, simulate.SimulationConfig(dt=0.01, T=0.2, n_paths=10,
                                                                           record_dt=0.1), [1.0, 0.5])
    rep = analysis.moment_compare([fast], lim, t_checkpoints=[0.2])
    for r in rep.rows:
        assert r["diff"] == 0
    f = analysis.standard_test_functions(2)["h1h2"]
    assert rep.rows[[r["f"] for r in rep.rows].index("h1h2")]["estimate"] == f(np.array([1.0, 0.5]))


def test_comparison_is_antisymmetric():
    rng = np.random.default_rng(0)
    t = [0.0, 1.0]
    a = ensemble(np.stack([np.ones((300, 1)), rng.normal(1, 1, (300, 1))], axis=1), t, eps=0.1)
    b = ensemble(np.stack([np.ones((300, 1)), rng.normal(1.1, 1, (300, 1))], axis=1), t, eps=0.1)
    ab = analysis.moment_compare([a], b)
    ba = analysis.moment_compare([b], a)
    for r, s in zip(ab.rows, ba.rows):
        assert r["diff"] == pytest.approx(-s["diff"], abs=1e-15)
        assert abs(r["z"]) == pytest.approx(abs(s["z"]), rel=1e-12)


def test_checkpoint_mismatch(bm):
    _, ens = bm
    with pytest.raises(CheckpointMismatch):
        analysis.moment_compare([ens], ens, t_checkpoints=[0.555])


def test_different_start_rejected(bm):
    _, ens = bm
    other = ensemble(ens.H + 1.0, ens.times, eps=0.1)
    with pytest.raises(CheckpointMismatch):
        analysis.moment_compare([other], ens)


def test_ladder_rule():
    assert analysis.ladder_verdict([0.3, 0.2, 0.01], [0.05, 0.05, 0.05]) == (True, True)
    # growth within one SE is tolerated
    assert analysis.ladder_verdict([0.1, 0.14], [0.05, 0.05])[0]
    assert not analysis.ladder_verdict([0.1, 0.2], [0.05, 0.05])[0]
    assert not analysis.ladder_verdict([0.1, 0.2], [0.05, 0.05])[1]


def test_table_and_json_render(bm):
    _, ens = bm
    rep = analysis.moment_compare([ens], ens)
    assert "ladder ok" in rep.table()
    assert rep.to_json()["passed"] is True


def test_standard_errors_scale_with_paths():
    rng = np.random.default_rng(1)
    se = [analysis.mean_and_se(rng.normal(size=n))[1] for n in (2000, 8000)]
    assert se[0] / se[1] == pytest.approx(2.0, rel=0.2)


# ------------------------------------------------------------ martingale

def test_constant_function_residual_is_zero(bm):
    gen, ens = bm
    f = lambda H: np.full(H.shape[:-1], 3.0)
    g = lambda H: np.zeros_like(H)
    h = lambda H: np.zeros(H.shape + (2,))
    r = analysis.martingale_residual(ens, gen, f, g, h, 1.0)
    assert r.value == 0 and r.stderr == 0 and r.excluded == 0


def test_self_residual_within_three_se(bm):
    gen, ens = bm
    for i in (0, 1):
        r = analysis.martingale_residual(ens, gen, *analysis.quadratic_test_function(i, 2), 1.0)
        assert abs(r.value) <= 3 * r.stderr


@settings(max_examples=10, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_residual_is_linear(bm, a, b):
    gen, ens = bm
    f1 = analysis.quadratic_test_function(0, 2)
    f2 = analysis.quadratic_test_function(1, 2)
    comb = [lambda H, j=j: a * f1[j](H) + b * f2[j](H) for j in range(3)]
    lhs = analysis.martingale_residual(ens, gen, *comb, 1.0).value
    rhs = a * analysis.martingale_residual(ens, gen, *f1, 1.0).value + \
        b * analysis.martingale_residual(ens, gen, *f2, 1.0).value
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_out_of_grid_paths_excluded():
    gen = averaging.GeneratorSpec.constant([[1.0]], [0.0], [(-1.2, 1.2)])
    c = simulate.SimulationConfig(dt=0.01, T=1.0, n_paths=200, master_seed=3, record_dt=0.01)
    ens = simulate.simulate_limit_diffusion(gen, c, [0.0])
    r = analysis.martingale_residual(ens, gen, *analysis.quadratic_test_function(0, 1), 1.0)
    assert 0 < r.excluded == int(ens.flags["out_of_grid"].sum()) < 200
    assert np.isfinite(r.value)


def test_all_paths_excluded():
    gen = averaging.GeneratorSpec.constant([[1.0]], [0.0], [(-0.1, 0.1)])
    c = simulate.SimulationConfig(dt=0.01, T=1.0, n_paths=20, master_seed=3, record_dt=0.01)
    ens = simulate.simulate_limit_diffusion(gen, c, [0.0])
    r = analysis.martingale_residual(ens, gen, *analysis.quadratic_test_function(0, 1), 1.0)
    assert r.excluded == 20 and np.isnan(r.value)


# -------------------------------------------------------------------- KS

def test_ks_identical():
    x = np.random.default_rng(0).normal(size=100)
    assert analysis.empirical_cdf_distance(x, x) == 0


def test_ks_disjoint_atoms():
    assert analysis.empirical_cdf_distance([0.0], [1.0]) == 1


def test_ks_same_law_is_small():
    rng = np.random.default_rng(5)
    assert analysis.empirical_cdf_distance(rng.normal(size=10_000), rng.normal(size=10_000)) < 0.041


def test_ks_component_and_empty():
    a = np.zeros((5, 2))
    a[:, 1] = 1
    assert analysis.empirical_cdf_distance(a, a + [0, 0], i=1) == 0
    with pytest.raises(ValueError):
        analysis.empirical_cdf_distance([], [1.0])


# ---------------------------------------------------------------- gluing

def fake_book_ensemble(exit_pages, hit, start):
    n = len(exit_pages)
    return simulate.OpenBookEnsemble(
        times=np.array([0.0]), h=np.zeros((n, 1, 2)), page=np.zeros((n, 1), int),
        binding_hits=hit.astype(int), first_hit_time=np.where(hit, 1.0, np.inf),
        start_page=np.full(n, start), exit_page=np.asarray(exit_pages), exit_time=np.ones(n),
        hit_before_exit=hit, split_pages=np.zeros((n, 4), int), config={"window": 0.15, "start_distance": 0.05})


def test_gluing_counts_and_symmetry():
    rng = np.random.default_rng(2)
    parts = {}
    for k in (1, 2, 3):
        pages = rng.choice([1, 2, 3], size=900, p=[0.25, 0.25, 0.5])
        pages[:10] = 0   # never exited
        parts[k] = fake_book_ensemble(pages, np.ones(900, bool), k)
    rep = analysis.gluing_splitting(parts, min_hits=500)
    for f in rep.exit_frequencies.values():
        assert f.sum() == pytest.approx(1.0, abs=1e-15)
    assert rep.never_exited == 30
    assert abs(rep.well_z) <= 3
    assert rep.gamma_hat[2] == 1.0
    assert rep.page_independence < 0.1
    assert "estimates" in rep.to_json()["caveat"]


def test_gluing_needs_hits():
    parts = {1: fake_book_ensemble(np.ones(50, int), np.ones(50, bool), 1)}
    with pytest.raises(InsufficientHits):
        analysis.gluing_splitting(parts, min_hits=500)


def test_page_independence_is_total_variation():
    parts = {1: fake_book_ensemble(np.array([1] * 10), np.ones(10, bool), 1),
             2: fake_book_ensemble(np.array([2] * 10), np.ones(10, bool), 2)}
    assert analysis.gluing_splitting(parts, min_hits=1).page_independence == 1.0
