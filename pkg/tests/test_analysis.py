import numpy as np
import pytest

from spacelfr import analysis as ana
from spacelfr import assembly as asy
from spacelfr import synthesis as syn
from spacelfr.errors import NominalUnstableError, UnknownBlockError
from spacelfr.lfr import COMPLEX_FULL, REAL_SCALAR, LfrModel, UncertaintyBlock, lft_upper
from spacelfr.mission import load_mission, mission_trajectory
from spacelfr.statespace import StateSpaceModel, dc_gain, gain


@pytest.fixture(scope="module")
def config():
    return load_mission()


@pytest.fixture(scope="module")
def trajectory(config):
    return mission_trajectory(config)


@pytest.fixture(scope="module")
def gains(config, trajectory):
    J = asy.composite_inertia(config, trajectory, config.timeline.first_dock)
    return syn.baseline_controller(J, config.controller["damping"],
                                   config.controller["natural_hz"])


# ---------------------------------------------------------------------------
# mu engine
# ---------------------------------------------------------------------------


def test_mu_zero_matrix():
    st = (UncertaintyBlock("F", COMPLEX_FULL, shape=(3, 3)),)
    assert ana.mu_upper(np.zeros((3, 3)), st) == 0.0
    bound, witness, _ = ana.mu_lower(np.zeros((3, 3)), st)
    assert bound == 0.0 and witness is None


def test_mu_single_full_block_exact():
    rng = np.random.default_rng(21)
    for _ in range(100):
        M = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        st = (UncertaintyBlock("F", COMPLEX_FULL, shape=(4, 4)),)
        smax = np.linalg.svd(M, compute_uv=False)[0]
        assert ana.mu_upper(M, st) == pytest.approx(smax, rel=1e-8, abs=1e-10)
        lo, wit, _ = ana.mu_lower(M, st)
        assert lo == pytest.approx(smax, rel=1e-8)
        assert abs(np.linalg.det(np.eye(4) - M @ wit)) < 1e-8


def test_mu_two_scalar_blocks_brute_force():
    a, b = 3.0 + 1.0j, 0.2 - 0.5j
    M = np.array([[0.0, a], [b, 0.0]])
    st = (UncertaintyBlock("d1", REAL_SCALAR, 1), UncertaintyBlock("d2", REAL_SCALAR, 1))
    expected = np.sqrt(abs(a * b))
    # brute-force oracle: smallest unit-phase diagonal perturbation scale
    # making I - M Delta singular
    best = np.inf
    for p1 in np.linspace(0, 2 * np.pi, 181):
        for p2 in np.linspace(0, 2 * np.pi, 181):
            d = np.diag([np.exp(1j * p1), np.exp(1j * p2)])
            ev = np.linalg.eigvals(M @ d)
            r = np.max(np.abs(ev))
            if r > 0:
                best = min(best, 1.0 / r)
    assert 1.0 / best == pytest.approx(expected, rel=1e-3)
    assert ana.mu_upper(M, st) == pytest.approx(expected, rel=1e-6)
    lo, wit, _ = ana.mu_lower(M, st)
    assert lo == pytest.approx(expected, rel=1e-8)
    assert abs(np.linalg.det(np.eye(2) - M @ wit)) < 1e-8


def test_mu_sandwich_and_witness_random_structures():
    rng = np.random.default_rng(5)
    st = (UncertaintyBlock("r", REAL_SCALAR, 2),
          UncertaintyBlock("F", COMPLEX_FULL, shape=(2, 2)))
    for _ in range(30):
        M = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        up = ana.mu_upper(M, st)
        lo, wit, _ = ana.mu_lower(M, st, iters=200)
        assert lo <= up * (1.0 + 1e-9)
        assert abs(np.linalg.det(np.eye(4) - M @ wit)) < 1e-8
        assert np.linalg.svd(wit, compute_uv=False)[0] * lo == pytest.approx(1.0, rel=1e-8)


def test_mu_structure_monotone():
    rng = np.random.default_rng(6)
    # enlarging a scalar block structure to a full block never decreases mu
    st_small = (UncertaintyBlock("a", REAL_SCALAR, 2),
                UncertaintyBlock("b", REAL_SCALAR, 2))
    st_big = (UncertaintyBlock("F", COMPLEX_FULL, shape=(4, 4)),)
    for _ in range(10):
        M = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        small = ana.mu_upper(M, st_small)
        big = ana.mu_upper(M, st_big)
        assert small <= big * (1.0 + 1e-8)


def test_mu_mixed_refinement_validity():
    # exact scalar references and never-below-certified random checks
    st = (UncertaintyBlock("d", REAL_SCALAR, 1),)
    for m, expected in [(1.0, 1.0), (2.0, 2.0), (-3.0, 3.0)]:
        M = np.array([[[m]]], dtype=complex)
        got = ana.mu_upper_mixed_batch(M, st)[0]
        assert got == pytest.approx(expected, rel=1e-3)
    assert ana.mu_upper_mixed_batch(np.array([[[1j]]]), st)[0] < 0.05

    rng = np.random.default_rng(17)
    st2 = (UncertaintyBlock("a", REAL_SCALAR, 1), UncertaintyBlock("b", REAL_SCALAR, 1))
    for _ in range(15):
        M = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        mixed = ana.mu_upper_mixed_batch(M[None], st2)[0]
        complex_ = ana.mu_upper(M, st2)
        assert mixed <= complex_ * (1.0 + 1e-4)
        # certified real destabilizations on the unit-square boundary
        lo = 0.0
        for da in np.linspace(-1, 1, 201):
            for db in (-1.0, 1.0):
                a2 = (M[0, 0] * da) * (M[1, 1] * db) - M[0, 1] * db * M[1, 0] * da
                a1 = -(M[0, 0] * da + M[1, 1] * db)
                roots = np.roots([a2, a1, 1.0]) if abs(a2) > 1e-14 else \
                    ([-1.0 / a1] if abs(a1) > 1e-14 else [])
                for t in np.atleast_1d(roots):
                    if abs(t.imag) < 1e-9 and t.real > 1e-9:
                        lo = max(lo, 1.0 / t.real)
        assert mixed >= lo - 1e-6


# ---------------------------------------------------------------------------
# augmented uncertainty
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def augmented(config, trajectory):
    plant = asy.assemble_plant(config, "switched", uncertain=True)
    pose = asy.pose_at(config, trajectory, 300.0)
    p = asy.evaluate_plant(plant, config, pose, uncertain=True)
    return p, ana.augment_uncertainty(p, ana.AugmentedUncertainty.from_config(config))


def test_augment_nominal_recovery(augmented):
    p, ph = augmented
    nom0 = p.nominal()
    nom1 = lft_upper(ph, {n: 0.0 for n in ph.block_names()}, _clip_zero=True)
    t0 = [nom0.input_labels.index(l) for l in asy.TORQUE_IN]
    r0 = [nom0.output_labels.index(l) for l in asy.RATE_OUT]
    t1 = [nom1.input_labels.index(l) for l in ph.group("torque_in")]
    r1 = [nom1.output_labels.index(l) for l in ph.group("rate_out")]
    assert np.allclose(dc_gain(nom0)[np.ix_(r0, t0)], dc_gain(nom1)[np.ix_(r1, t1)],
                       atol=1e-14)


def test_augment_structure_order(augmented):
    _, ph = augmented
    names = ph.block_names()
    assert names[-10:] == ["delta_add"] + list(ana.MUL_NAMES)


def test_multiplicative_diag_scaling(augmented):
    _, ph = augmented
    vals = {n: 0.0 for n in ph.block_names()}
    for n in ("delta_mul_xx", "delta_mul_yy", "delta_mul_zz"):
        vals[n] = 1.0
    nom = lft_upper(ph, {n: 0.0 for n in ph.block_names()}, _clip_zero=True)
    pushed = lft_upper(ph, vals, _clip_zero=True)
    t1 = [nom.input_labels.index(l) for l in ph.group("torque_in")]
    r1 = [nom.output_labels.index(l) for l in ph.group("rate_out")]
    G0 = dc_gain(nom)[np.ix_(r1, t1)]
    G1 = dc_gain(pushed)[np.ix_(r1, t1)]
    assert np.allclose(G1, 1.04 * G0, rtol=1e-10)


def test_additive_floor(augmented):
    _, ph = augmented
    # worst additive direction raises the torque->rate gain floor to >= W_add
    vals = {n: 0.0 for n in ph.block_names()}
    vals["delta_add"] = np.eye(3)
    pushed = lft_upper(ph, vals, _clip_zero=True)
    t1 = [pushed.input_labels.index(l) for l in ph.group("torque_in")]
    r1 = [pushed.output_labels.index(l) for l in ph.group("rate_out")]
    nom = lft_upper(ph, {n: 0.0 for n in ph.block_names()}, _clip_zero=True)
    G0 = dc_gain(nom)[np.ix_(r1, t1)]
    G1 = dc_gain(pushed)[np.ix_(r1, t1)]
    w_add = 10.0 ** (-75.0 / 20.0)
    assert np.min(np.linalg.svd(G1 - G0, compute_uv=False)) == pytest.approx(w_add, rel=1e-9)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_closed_grid(config, trajectory, gains):
    times, closed = ana.closed_loop_grid(config, trajectory, gains, 4)
    return times, closed


def test_sweep_zeroed_uncertainty_gives_zero_mu(config, trajectory, gains):
    times, closed = ana.closed_loop_grid(config, trajectory, gains, 2, augment=False)
    nominal = [LfrModel(
        m.core if not m.structure else
        lft_upper(m, {n: 0.0 for n in m.block_names()}, _clip_zero=True),
        (), {"w": (), "z": ()}) for m in closed]
    om = ana.mu_frequency_grid((), per_decade=4)
    res = ana.robust_stability_sweep(nominal, om, labels=times)
    for r in res:
        assert np.all(r.upper == 0.0)


def test_sweep_detects_unstable_model(config, trajectory, small_closed_grid):
    _, closed = small_closed_grid
    unstable = LfrModel(
        StateSpaceModel([[0.5]], [[1.0]], [[1.0]], [[0.0]], ("w0",), ("z0",)),
        (UncertaintyBlock("d", REAL_SCALAR, 1),), {"w": ("w0",), "z": ("z0",)})
    with pytest.raises(NominalUnstableError) as e:
        ana.robust_stability_sweep([closed[0], unstable], ana.mu_frequency_grid((), per_decade=3))
    assert e.value.index == 1


def test_sweep_bounds_and_peak(small_closed_grid):
    times, closed = small_closed_grid
    om = 2 * np.pi * np.linspace(0.5, 0.9, 25)
    res = ana.robust_stability_sweep(closed, om, with_lower=True, labels=times)
    for r in res:
        assert np.all(r.upper >= r.lower - 1e-12)
        assert np.all(r.upper >= 0.0)
        assert r.peak[1] == np.max(r.upper)
    label, w_pk, mu_pk = ana.sweep_peak(res)
    assert mu_pk == max(r.peak[1] for r in res)


def test_subset_sweeps_below_full(config, trajectory, gains):
    times, closed = ana.closed_loop_grid(config, trajectory, gains, 2)
    m = closed[1]
    om = 2 * np.pi * np.linspace(0.55, 0.85, 15)
    full = ana.mu_sweep_model(m, om, with_lower=False)
    from spacelfr.lfr import close_blocks
    mod_names = [n for n in m.block_names() if "delta_omega1" not in n]
    only_mod = ana.mu_sweep_model(close_blocks(m, {n: 0.0 for n in mod_names}),
                                  om, with_lower=False)
    mec_names = [n for n in m.block_names() if "rh2.delta" not in n]
    only_mec = ana.mu_sweep_model(close_blocks(m, {n: 0.0 for n in mec_names}),
                                  om, with_lower=False)
    assert np.all(only_mod.upper <= full.upper * 1.001 + 1e-9)
    assert np.all(only_mec.upper <= full.upper * 1.001 + 1e-9)


def test_stability_certificate_consistency(config, trajectory, gains):
    # where the complex bound certifies mu < 1 on a band, random admissible
    # real samples stay stable
    times, closed = ana.closed_loop_grid(config, trajectory, gains, 2)
    m = closed[0]
    om = 2 * np.pi * np.linspace(0.01, 0.2, 12)
    res = ana.mu_sweep_model(m, om, with_lower=False)
    if np.max(res.upper) < 1.0:
        rng = np.random.default_rng(0)
        real_names = [b.name for b in m.structure if b.kind == REAL_SCALAR]
        for _ in range(20):
            vals = {n: rng.uniform(-1, 1) for n in real_names}
            for b in m.structure:
                if b.kind == COMPLEX_FULL:
                    v = rng.normal(size=b.shape)
                    s = np.linalg.svd(v, compute_uv=False)[0]
                    vals[b.name] = v / max(1.0, s * 1.001)
            closed_sample = lft_upper(m, vals)
            assert closed_sample.spectral_abscissa() < 0.0


def test_worst_case_gain_zero_uncertainty_equals_nominal(config, trajectory, gains):
    times, closed = ana.closed_loop_grid(config, trajectory, gains, 2, augment=False)
    m = closed[0]
    from spacelfr.lfr import close_blocks
    nom = close_blocks(m, {n: 0.0 for n in m.block_names()}, _clip_zero=True)
    om = 2 * np.pi * np.linspace(0.02, 0.2, 9)
    bounds, nominal = ana.worst_case_gain(nom, "e_p", om)
    assert np.allclose(bounds, nominal, rtol=1e-9)


def test_worst_case_gain_dominates_nominal(config, trajectory, gains, small_closed_grid):
    _, closed = small_closed_grid
    m = closed[1]
    om = 2 * np.pi * np.linspace(0.03, 0.4, 10)
    for ch in ("e_p", "e_u"):
        bounds, nominal = ana.worst_case_gain(m, ch, om, tol=5e-3)
        assert np.all(bounds >= nominal * (1.0 - 1e-9))


def test_worst_case_eu_rolls_off(config, trajectory, gains, small_closed_grid):
    _, closed = small_closed_grid
    m = closed[1]
    om = 2 * np.pi * np.array([0.7, 1.4, 2.8, 5.6, 11.2])
    bounds, _ = ana.worst_case_gain(m, "e_u", om, tol=5e-3)
    assert bounds[-1] < 0.2 * bounds[0]


def test_sensitivity_overlay(config, trajectory):
    plant = asy.assemble_plant(config, "switched", uncertain=True)
    pose = asy.pose_at(config, trajectory, 300.0)
    p = asy.evaluate_plant(plant, config, pose, uncertain=True)
    with pytest.raises(UnknownBlockError):
        ana.sensitivity_overlay(p, ["nope"], 3)
    om, curves = ana.sensitivity_overlay(p, [], 3)
    assert len(curves) == 1
    dense = 2 * np.pi * np.linspace(0.45, 1.05, 1500)
    om, curves = ana.sensitivity_overlay(p, ["sa3.delta_omega1", "sa4.delta_omega1"], 5,
                                         channel=(asy.TORQUE_IN[1], asy.RATE_OUT[1]),
                                         omegas=dense)
    assert len(curves) == 5
    # modal subset spreads the target-mode resonance by about +-20 percent
    f = om / (2 * np.pi)
    band = (f > 0.45) & (f < 1.05)
    peaks = []
    for tag, mag in curves:
        if tag in ("low", "high", "nominal"):
            peaks.append((tag, f[band][np.argmax(mag[band])]))
    d = dict(peaks)
    assert d["low"] < d["nominal"] < d["high"]
    assert d["low"] == pytest.approx(d["nominal"] * 0.8, rel=0.1)
    assert d["high"] == pytest.approx(d["nominal"] * 1.2, rel=0.1)
