from fractions import Fraction

import pytest

from fairvol.dist import Gaussian, Step
from fairvol.logic.boxes import Hyperrectangle
from fairvol.logic.formula import FALSE, TRUE, LinExpr, conj, disj
from fairvol.volume import (
    EXHAUSTED,
    BoundPair,
    BoundRunner,
    NeedDecay,
    Progress,
    Sampler,
    SamplerConfig,
    SoundnessError,
    bound_pair,
    clamp_bounds,
)

from conftest import requires_solver, satisfiable

pytestmark = requires_solver

x, y = LinExpr.var("x"), LinExpr.var("y")
STD = {"x": Gaussian(0, 1), "y": Gaussian(0, 1)}
# Phi(1) - Phi(-1), mpmath at 40 digits
ONE_SIGMA = 0.68268949213708589717
# 1 - Phi(1 / sqrt(5)), mpmath at 40 digits
SUM_EXACT = 0.32736042300928851
# wedge of angle pi/4 under a rotation-invariant density
WEDGE = 0.125


def _run(phi, densities, steps, **kw):
    s = Sampler(phi, densities, SamplerConfig(**kw))
    try:
        history = []
        for _ in range(steps):
            out = s.advance()
            history.append(s.vol)
            if out is EXHAUSTED:
                break
        return s, history
    finally:
        s.close()


# -- configuration ------------------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(decay=1.0)
    with pytest.raises(ValueError):
        SamplerConfig(adf_steps=0)
    with pytest.raises(ValueError):
        SamplerConfig(extension="magic")


def test_missing_density_rejected():
    with pytest.raises(ValueError, match="no density"):
        Sampler(x >= y, {"x": Gaussian(0, 1)})


# -- single sampler ------------------------------------------------------------------------------


def test_false_region_has_zero_volume():
    s = Sampler(FALSE, STD)
    assert s.step() is EXHAUSTED
    assert s.vol == 0.0
    s.close()


def test_true_region_has_unit_volume():
    s, _ = _run(TRUE, STD, 5)
    assert s.vol == 1.0
    assert s.exhausted


def test_one_sigma_interval_in_one_step():
    s = Sampler(conj(x >= -1, x <= 1), {"x": Gaussian(0, 1)})
    out = s.advance()
    assert isinstance(out, Progress)
    assert abs(s.vol - ONE_SIGMA) <= 1e-9
    assert s.advance() is EXHAUSTED
    s.close()


def test_wedge_lower_bound_is_sound_at_every_step():
    _, history = _run(conj(x >= y, y >= 0), STD, 40, check_samples=True)
    assert all(v <= WEDGE + 1e-12 for v in history)
    assert all(a <= b for a, b in zip(history, history[1:]))
    assert history[-1] > 0.05


def test_samples_are_disjoint_and_inside():
    phi = disj(conj(x >= 0, y >= 0), x + y <= -1)
    s, _ = _run(phi, STD, 25)
    for i, a in enumerate(s.samples):
        assert not satisfiable(conj(a.to_formula(), ~phi))
        for b in s.samples[i + 1 :]:
            assert not a.overlaps(b)


def test_first_guided_step_needs_decay():
    # no side of any box can carry guide mass 1, since the guide covers less
    s = Sampler(conj(x >= -1, x <= 1), {"x": Gaussian(0, 1)})
    assert s.step() == NeedDecay(Fraction(1))
    s.close()


def test_decay_is_geometric():
    s = Sampler(x >= 0, {"x": Gaussian(0, 1)}, SamplerConfig(decay=0.5))
    for _ in range(4):
        s.decay()
    assert s.lb == Fraction(1, 16)
    assert s.decays == 4
    s.close()


def test_guide_dropped_below_floor():
    s = Sampler(x >= 0, {"x": Gaussian(0, 1)}, SamplerConfig(lb_floor=0.1))
    assert s.adf_mode
    for _ in range(4):
        s.decay()
    assert not s.adf_mode
    s.close()


def test_no_guide_without_adf():
    s = Sampler(x >= 0, {"x": Gaussian(0, 1)}, SamplerConfig(adf="none"))
    assert s.adfs == {} and not s.adf_mode
    s.close()


def test_guided_sampling_converges_without_growth():
    _, history = _run(conj(x >= -1, x <= 1), {"x": Gaussian(0, 1)}, 200, maximize=False)
    assert history[-1] >= 0.95 * ONE_SIGMA
    assert history[-1] <= ONE_SIGMA + 1e-12


@pytest.mark.parametrize("extension", ["exact", "solver"])
def test_extension_modes_agree_on_interval(extension):
    s, _ = _run(conj(x >= -1, x <= 2), {"x": Gaussian(0, 1)}, 3, extension=extension)
    g = Gaussian(0, 1)
    assert abs(s.vol - g.mass(-1, 2)) <= 1e-9


def test_sampling_is_deterministic():
    phi = conj(x >= y, y >= 0)
    a, ha = _run(phi, STD, 15, seed=3)
    b, hb = _run(phi, STD, 15, seed=3)
    assert ha == hb
    assert a.samples == b.samples


def test_check_samples_catches_bad_box():
    s = Sampler(conj(x >= 0, x <= 1), {"x": Gaussian(0, 1)})
    s.advance()
    with pytest.raises(SoundnessError):
        s.check_box(s.samples[0])
    with pytest.raises(SoundnessError):
        s.check_box(Hyperrectangle.from_dict({"x": (2, 3)}))
    s.close()


def test_step_distribution_region():
    sex = Step(((0.0, 1.0, 0.3307), (1.0, 2.0, 0.6693)))
    s, _ = _run(LinExpr.var("s") < 1, {"s": sex}, 5)
    # the strict edge is approached from inside, leaving at most a 2**-20 sliver
    assert 0.3307 - 0.6693 * 2**-20 <= s.vol <= 0.3307


# -- bound pairs ------------------------------------------------------------------------------------


def test_bound_pair_validation():
    assert BoundPair(0.2, 0.3).width == pytest.approx(0.1)
    with pytest.raises(ValueError):
        BoundPair(0.5, 0.4)
    assert clamp_bounds(-1e-17, 1 + 1e-16) == BoundPair(0.0, 1.0)
    assert BoundPair(0.2, 0.3).contains(0.31, slack=0.02)


def test_bound_pair_of_true_and_false():
    assert bound_pair(TRUE, STD, max_rounds=3) == BoundPair(1.0, 1.0)
    assert bound_pair(FALSE, STD, max_rounds=3) == BoundPair(0.0, 0.0)


def test_bound_pair_brackets_sum_event():
    d = {"x": Gaussian(0, 2), "y": Gaussian(-1, 1)}
    seen = []
    b = bound_pair(x + y >= 0, d, max_rounds=40, on_round=lambda r, bp: seen.append(bp))
    assert b.contains(SUM_EXACT)
    assert b.width < 0.05
    for prev, cur in zip(seen, seen[1:]):
        assert cur.lower >= prev.lower and cur.upper <= prev.upper
        assert cur.contains(SUM_EXACT)


def test_bound_pair_brackets_wedge():
    b = bound_pair(conj(x >= y, y >= 0), STD, max_rounds=30)
    assert b.contains(WEDGE)


def test_bound_pair_stop_condition():
    rounds = []
    bound_pair(x >= 0, STD, max_rounds=100, stop=lambda bp: True, on_round=lambda r, bp: rounds.append(r))
    assert rounds == [1]


def test_runner_volumes_never_exceed_one():
    r = BoundRunner(disj(x >= 1, y <= -1), STD)
    try:
        for _ in range(20):
            r.round()
            assert r.lower.vol + r.upper.vol <= 1 + 1e-12
        assert r.queries() > 0
    finally:
        r.close()


def test_half_space_bounds_tighten():
    b = bound_pair(x >= 0, {"x": Gaussian(0, 1)}, max_rounds=5)
    # the complement x < 0 has a strict edge, so its sampler stops short of 0
    sliver = Gaussian(0, 1).pdf(0) * 2**-20
    assert b.lower == pytest.approx(0.5, abs=1e-12)
    assert 0.5 <= b.upper <= 0.5 + sliver
    assert b.width <= sliver
