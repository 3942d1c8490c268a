import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fkground.builtins import (DEMO_ALPHA, GOLDEN_OMEGA, antiferromagnetic_demo,
                               cosine_potential, decoupled_demo, demo_potential, fk_periodic,
                               fk_quasiperiodic, long_range_pair, three_body_demo,
                               two_block_demo)
from fkground.errors import ContractError, EvaluationError
from fkground.model import (InteractionSpec, InteractionTerm, LatticeConfiguration,
                            TorusPotential, chain, check_terms, coercivity_probe,
                            constant_background, ferromagnetic_check, hessian_entry,
                            linear_background, relative_energy, residual, summability_probe,
                            window_energy)


def lin(w, b=0.0, phi=None):
    return LatticeConfiguration(linear_background(w, b), phi)


def demo_V(x, eps=0.01):
    """Independent scalar evaluation of the demo medium at u * alpha."""
    return eps * sum(math.cos(2 * math.pi * x * a) for a in DEMO_ALPHA)


# --- window_energy --------------------------------------------------------


def test_window_energy_constant_is_zero():
    assert window_energy(fk_periodic(), lin(0.0), [0]) == 0.0


def test_window_energy_bonds():
    assert window_energy(fk_periodic(), lin(0.5), [0]) == pytest.approx(0.25, abs=1e-15)


def test_window_energy_quasiperiodic_matches_scalar_sum():
    spec = fk_quasiperiodic(demo_potential(0.01))
    u = [0.3 * n for n in range(-1, 3)]
    # bonds (-1,0), (0,1), (1,2) and the medium at 0 and 1
    expected = sum(0.5 * (u[k] - u[k + 1]) ** 2 for k in range(3))
    expected -= demo_V(u[1]) + demo_V(u[2])
    assert window_energy(spec, lin(0.3), [0, 1]) == pytest.approx(expected, abs=1e-14)


def test_nonfinite_energy_names_term():
    bad = InteractionTerm(((0,),), lambda x, b: np.log(x[0] - x[0] - 1.0),
                          lambda x, b: x[None], lambda x, b: np.ones_like(x[0])[None, None],
                          "broken")
    spec = InteractionSpec(1, lambda base: (bad,), 1)
    with np.errstate(invalid="ignore"), pytest.raises(EvaluationError, match="broken"):
        window_energy(spec, lin(0.0), [0])


# --- relative energy ------------------------------------------------------


def test_relative_energy_zero_phi():
    assert relative_energy(fk_periodic(), lin(0.3), {}, [0, 1]) == 0.0


def test_relative_energy_single_site():
    assert relative_energy(fk_periodic(), lin(0.0), {0: 1.0}, [0]) == -1.0


def test_relative_energy_hull_member_matches_direct_sum(small_hull_spec):
    from fkground.hull import sample_config, sample_values
    spec, h = small_hull_spec
    u = sample_config(h, beta=0.4)
    got = relative_energy(spec, u, {0: 0.1}, [0])
    vals = sample_values(h, [-1, 0, 1], beta=0.4)
    eps = spec.medium.coeffs.real.max() * 2

    def local(v0):
        return (0.5 * (vals[0] - v0) ** 2 + 0.5 * (v0 - vals[2]) ** 2 - demo_V(v0, eps))

    assert got == pytest.approx(local(vals[1]) - local(vals[1] + 0.1), abs=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=4), st.integers(0, 4))
def test_relative_energy_anchor_invariance(values, extra):
    spec = fk_quasiperiodic(demo_potential(0.01))
    phi = {k: v for k, v in enumerate(values)}
    u = lin(GOLDEN_OMEGA, 0.2)
    small = relative_energy(spec, u, phi, list(phi))
    big = relative_energy(spec, u, phi, list(range(-extra, len(values) + extra)))
    assert big == pytest.approx(small, abs=1e-12)


def test_relative_energy_rejects_non_mapping():
    with pytest.raises(ContractError):
        relative_energy(fk_periodic(), lin(0.0), [1.0, 2.0], [0])


# --- residuals and hessians ----------------------------------------------


def test_linear_is_harmonic():
    r = [residual(fk_periodic(), lin(GOLDEN_OMEGA), n) for n in range(-3, 4)]
    assert max(abs(x) for x in r) < 1e-14


def test_residual_sign_convention():
    spec = fk_quasiperiodic(demo_potential(0.01))
    V = spec.medium
    for n in (-2, 0, 3):
        expected = -float(V.d_alpha(V.along(n * GOLDEN_OMEGA)))
        assert residual(spec, lin(GOLDEN_OMEGA), n) == pytest.approx(expected, abs=1e-14)


MODELS = [fk_periodic(), fk_periodic(cosine_potential(0.1)), fk_quasiperiodic(demo_potential(0.01)),
          long_range_pair(cutoff=4), three_body_demo(), antiferromagnetic_demo(),
          decoupled_demo(), two_block_demo()]


@pytest.mark.parametrize("spec", MODELS, ids=lambda s: s.name)
def test_residual_matches_finite_difference(spec):
    rng = np.random.default_rng(3)
    for _ in range(5):
        phi = {n: rng.uniform(-1, 1) for n in range(-8, 9)}
        u = lin(0.3, 0.1, phi)
        i = int(rng.integers(-3, 4))
        h = 1e-6
        fd = (window_energy(spec, u.perturbed({i: h}), [i])
              - window_energy(spec, u.perturbed({i: -h}), [i])) / (2 * h)
        assert residual(spec, u, i) == pytest.approx(fd, abs=1e-6)
        j = i + int(rng.integers(-2, 3))
        fd2 = (residual(spec, u.perturbed({j: h}), i) - residual(spec, u.perturbed({j: -h}), i)) / (2 * h)
        assert hessian_entry(spec, u, i, j) == pytest.approx(fd2, abs=1e-5)
        assert hessian_entry(spec, u, i, j) == hessian_entry(spec, u, j, i)


def test_hessian_entries_fk():
    spec = fk_periodic(cosine_potential(0.2))
    assert hessian_entry(spec, lin(0.3), 4, 5) == -1.0
    assert hessian_entry(spec, lin(0.3), 4, 6) == 0.0


def test_check_terms_clean():
    for spec in MODELS:
        assert check_terms(spec, lin(0.3, 0.0, {0: 0.5}), chain(-3, 3)) == []


# --- probes ---------------------------------------------------------------


def test_ferromagnetic_fk():
    for spec in (fk_periodic(cosine_potential(0.1)), fk_quasiperiodic(demo_potential(0.01))):
        rep = ferromagnetic_check(spec, [lin(0.3), lin(0.1, 0.0, {0: 2.0})], chain(-3, 3))
        assert rep.is_ferromagnetic and rep.worst_entry[2] == -1.0


def test_ferromagnetic_antiferro_fails():
    rep = ferromagnetic_check(antiferromagnetic_demo(), [lin(0.0)], chain(0, 3))
    assert not rep.is_ferromagnetic and rep.worst_entry[2] == 1.0


def test_ferromagnetic_long_range():
    spec = long_range_pair({r: -2.0**-r for r in range(1, 6)})
    assert ferromagnetic_check(spec, [lin(0.3)], chain(0, 5)).is_ferromagnetic


def test_ferromagnetic_rejects_empty():
    with pytest.raises(ContractError):
        ferromagnetic_check(fk_periodic(), [], [0])


def test_coercivity():
    res = coercivity_probe(fk_periodic(cosine_potential(0.3)), lin(0.2), None, 0)
    assert res.passed and res.values[res.t_values.index(0.0)] == 0.0


def test_coercivity_quasiperiodic_growth():
    spec = fk_quasiperiodic(demo_potential(0.01))
    ts = (10.0, 100.0, 1000.0)
    for sign in (1, -1):
        res = coercivity_probe(spec, lin(GOLDEN_OMEGA), None, 0, [sign * t for t in ts])
        assert list(res.values) == sorted(res.values) and res.values[0] > 0


def test_coercivity_fails_without_confinement():
    # a single unbounded-below on-site term is not coercive
    t = InteractionTerm(((0,),), lambda x, b: -x[0] ** 2, lambda x, b: (-2 * x[0])[None],
                        lambda x, b: (-2 * np.ones_like(x[0]))[None, None])
    spec = InteractionSpec(1, lambda base: (t,), 1)
    assert not coercivity_probe(spec, lin(0.0), None, 0).passed


def test_summability_finite_range():
    spec = fk_periodic(cosine_potential(0.1))
    out = summability_probe(spec, lin(0.3), {0: 0.5}, [1, 2, 5])
    assert out[2] == (0.0, 0.0) and out[5] == (0.0, 0.0) and out[1][0] > 0


def test_summability_long_range_tail_matches_direct_sum():
    spec = long_range_pair(cutoff=20, decay=0.5)
    w, p = 0.3, 0.5
    out = summability_probe(spec, lin(w), {0: p}, [10])
    best_g = best_h = 0.0
    for t in (0.0, 0.5, 1.0):
        g = h = 0.0
        for r in range(10, 21):
            c = 0.5**r
            # pair anchored at 0 (sites 0, r) and at -r (sites -r, 0)
            g += 2 * c * abs(-r * w + t * p) + 2 * c * abs(-r * w - t * p)
            h += 2 * 4 * c
        best_g, best_h = max(best_g, g), max(best_h, h)
    assert out[10][0] == pytest.approx(best_g, rel=1e-12)
    assert out[10][1] == pytest.approx(best_h, rel=1e-12)


# --- types ----------------------------------------------------------------


def test_potential_hermitian_required():
    with pytest.raises(ContractError):
        TorusPotential((1.0, 2.0**0.5), {(1, 0): 1.0, (-1, 0): 2.0})


def test_nonresonance_diagnostic():
    assert demo_potential(0.01).nonresonance() == pytest.approx(1.0)
    assert demo_potential(0.01).nonresonance() > 1e-8


def test_d_alpha_matches_finite_difference():
    V = demo_potential(0.05)
    th = np.array([[0.1, 0.7], [0.33, 0.2]])
    h = 1e-6
    fd = (V(th + h * V.alpha) - V(th - h * V.alpha)) / (2 * h)
    assert np.allclose(V.d_alpha(th), fd, atol=1e-7)


def test_configuration_overlay():
    u = LatticeConfiguration(constant_background(1.0), {2: 0.5, 3: 0.0})
    assert u.support == [(2,)]
    assert u.values([(1,), (2,)]).tolist() == [1.0, 1.5]
    assert u.perturbed({2: -0.5}).value(2) == 1.0


def test_site_dimension_checked():
    with pytest.raises(ContractError):
        LatticeConfiguration(constant_background(0.0), {(1, 2): 1.0}, dim=1)


def test_range_bound_enforced():
    t = InteractionTerm(((0,), (3,)), lambda x, b: x[0] * 0, lambda x, b: x * 0,
                        lambda x, b: np.zeros((2, 2) + np.shape(x[0])))
    spec = InteractionSpec(1, lambda base: (t,), 2)
    with pytest.raises(ContractError):
        window_energy(spec, lin(0.0), [0])
