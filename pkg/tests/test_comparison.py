import numpy as np
import pytest

from fkground.builtins import (cosine_potential, demo_potential, fk_periodic, fk_quasiperiodic,
                               long_range_pair, three_body_demo, two_block_demo)
from fkground.comparison import (ContactScenario, contact_check, contact_propagation,
                                 hilbert_identity_check, synthetic_scenario)
from fkground.errors import ContactError, GraphError, PreconditionError
from fkground.hull import sample_config
from fkground.model import LatticeConfiguration, chain, linear_background


def lin(w, b=0.0, phi=None):
    return LatticeConfiguration(linear_background(w, b), phi)


def random_case(rng, n_eta=3):
    u = lin(0.3, rng.uniform(-1, 1), {n: rng.normal() for n in range(-4, 5)})
    sites = rng.choice(np.arange(-2, 3), n_eta, replace=False)
    return u, {int(s): rng.normal() for s in sites}


def test_zero_eta():
    assert hilbert_identity_check(fk_periodic(cosine_potential(0.2)), lin(0.3), {}, 0) == 0.0


def test_fk_periodic_identity():
    rng = np.random.default_rng(0)
    spec = fk_periodic(cosine_potential(0.2))
    for _ in range(20):
        u, eta = random_case(rng)
        assert hilbert_identity_check(spec, u, eta, int(rng.integers(-2, 3)), 16) < 1e-10


def test_free_chain_exact_with_two_nodes():
    rng = np.random.default_rng(1)
    for _ in range(10):
        u, eta = random_case(rng)
        assert hilbert_identity_check(fk_periodic(), u, eta, 0, 2) < 1e-14


def test_quadrature_convergence():
    rng = np.random.default_rng(2)
    spec = fk_quasiperiodic(demo_potential(0.05))
    u, _ = random_case(rng)
    eta = {0: 0.9, 1: -0.7}
    errs = [hilbert_identity_check(spec, u, eta, 0, n) for n in (2, 4, 8, 16)]
    assert errs[0] > errs[1] > errs[2] > errs[3]
    assert errs[3] < 1e-10


def test_contact_neighbours_certified():
    spec = fk_periodic()
    sc = ContactScenario.create(spec, lin(0.3), {}, 4, chain(0, 9))
    res = contact_check(spec, sc)
    assert res.certified == [(3,), (4,), (5,)]


def test_contact_vacuous_pass():
    spec = fk_periodic(cosine_potential(0.1))
    base = LatticeConfiguration(lambda s: np.zeros(len(s)))
    sc = ContactScenario.create(spec, base, {20: 0.5, 21: 0.25}, 4, chain(0, 9))
    assert contact_check(spec, sc).certified == [(3,), (4,), (5,)]


def test_mixed_sign_rejected():
    with pytest.raises(PreconditionError, match="sign"):
        ContactScenario.create(fk_periodic(), lin(0.3), {10: 1.0, 12: -1.0}, 0, chain(0, 3))


def test_residual_mismatch_rejected():
    with pytest.raises(PreconditionError):
        ContactScenario.create(fk_periodic(), lin(0.3), {1: 0.5}, 0, chain(0, 3))


def test_counterexample_detected():
    # bypass validation: eta is nonzero at a neighbour of the touching site
    spec = fk_periodic()
    sc = ContactScenario(lin(0.3), {(-1,): 0.5}, (0,), tuple(chain(0, 3)), 1)
    with pytest.raises(ContactError, match="counterexample") as err:
        contact_check(spec, sc)
    assert err.value.site == (-1,)
    # eta on the far side only: the near neighbour cannot be certified either
    sc = ContactScenario(lin(0.3), {(1,): 0.5}, (0,), tuple(chain(0, 3)), 1)
    with pytest.raises(ContactError, match="certify"):
        contact_check(spec, sc)


def test_not_touching():
    spec = fk_periodic()
    sc = ContactScenario(lin(0.3), {(0,): 0.5}, (0,), tuple(chain(0, 3)), 1)
    with pytest.raises(ContactError, match="touch"):
        contact_check(spec, sc)


def test_propagation_trivial():
    spec = fk_periodic()
    res = contact_propagation(spec, ContactScenario.create(spec, lin(0.3), {}, 0, chain(0, 9)))
    assert res.certified == chain(-1, 10) and res.strict is True


def test_propagation_split_window_stalls():
    spec = fk_periodic()
    sc = ContactScenario.create(spec, lin(0.3), {}, 0, chain(0, 3) + chain(6, 9))
    with pytest.raises(GraphError, match="stalled"):
        contact_propagation(spec, sc)


def test_propagation_requires_equilibria():
    spec = fk_periodic(cosine_potential(0.1))
    sc = ContactScenario.create(spec, lin(0.3), {}, 0, chain(0, 3))
    with pytest.raises(PreconditionError, match="equilibrium"):
        contact_propagation(spec, sc)


def test_propagation_disconnected_model():
    spec = two_block_demo(5)
    base = LatticeConfiguration(lambda s: np.full(len(s), 0.5))
    sc = ContactScenario.create(spec, base, {}, 0, chain(0, 9))
    with pytest.raises(GraphError):
        contact_propagation(spec, sc)


@pytest.mark.parametrize("spec", [fk_periodic(), long_range_pair(cutoff=3), three_body_demo()],
                         ids=lambda s: s.name)
def test_synthetic_scenarios(spec):
    rng = np.random.default_rng(4)
    for sign in (1, -1):
        sc = synthetic_scenario(spec, lin(0.3, 0.2), chain(0, 7), rng, sign=sign)
        res = contact_propagation(spec, sc)
        assert set(chain(0, 7)) < set(res.certified) and res.strict
        assert all(sc.eta.get(s, 0.0) == 0.0 for s in res.certified)


def test_touching_hull_members(small_hull_spec):
    spec, h = small_hull_spec
    u = sample_config(h, beta=0.4)
    # identical members touch everywhere; the contact engine certifies eta = 0
    sc = ContactScenario.create(spec, u, {}, 5, chain(0, 19))
    res = contact_propagation(spec, sc, scenario_tol=1e-9)
    assert res.frontier == [(-1,), (20,)]


def test_rerun_identical():
    spec = long_range_pair(cutoff=2)
    sc = synthetic_scenario(spec, lin(0.3), chain(0, 5), np.random.default_rng(9))
    assert contact_propagation(spec, sc).certified == contact_propagation(spec, sc).certified
