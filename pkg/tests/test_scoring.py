import math

import numpy as np
import pytest

from oodkit.errors import CacheCompletenessError, ValidationError
from oodkit.metrics import auroc
from oodkit.scoring import (
    Cutoff,
    Tier,
    conditional_score,
    filtered,
    fit_cutoff,
    ic_score,
    lr_score,
    lrat_score,
    passed,
)
from oodkit.transforms import TransformFamily, enumerate_family

STIR = enumerate_family("stir")


def full_map(identity=-100.0, each=-110.0):
    m = {"identity": identity}
    m.update({tid: each for tid in STIR.transform_ids})
    return m


class TestLrScore:
    def test_symmetric_transform_scores_zero(self):
        m = full_map(identity=-50.0, each=-50.0)
        assert lr_score(m, STIR) == 0.0

    def test_arithmetic_example(self):
        assert lr_score(full_map(-100.0, -110.0), STIR) == pytest.approx(70.0)

    def test_missing_entry(self):
        m = full_map()
        del m["stir/rot90"]
        with pytest.raises(CacheCompletenessError):
            lr_score(m, STIR)

    def test_empty_family_scores_zero(self):
        empty = TransformFamily("stir", ())
        assert lr_score({"identity": -5.0}, empty) == 0.0

    def test_additive_over_disjoint_union(self):
        shake = enumerate_family("shake")
        m = {"identity": -10.0}
        rng = np.random.default_rng(0)
        for tid in STIR.transform_ids + shake.transform_ids:
            m[tid] = float(-10 - rng.uniform(0, 5))
        union = TransformFamily("stir", STIR.members + shake.members)
        assert lr_score(m, union) == pytest.approx(
            lr_score(m, STIR) + lr_score(m, shake), abs=1e-12)

    def test_identity_shift_scales_with_family_size(self):
        m = full_map(-100.0, -110.0)
        base = lr_score(m, STIR)
        shifted = dict(m)
        shifted["identity"] = m["identity"] + 3.5
        assert lr_score(shifted, STIR) == base + 7 * 3.5


class TestFitCutoff:
    def test_zero_spread(self):
        c = fit_cutoff([0.0, 0.0, 0.0, 0.0])
        assert c.tau == 0.0

    def test_hand_computed_mad(self):
        # median 3, deviations [2,1,0,1,2], mad 1, tau = 3 - 3*1 = 0
        c = fit_cutoff([1.0, 2.0, 3.0, 4.0, 5.0])
        assert c.tau == 0.0
        assert c.method == "mad3"

    def test_percentile_interpolated(self):
        c = fit_cutoff([1.0, 2.0, 3.0, 4.0], method="percentile", tail_mass=0.5)
        assert c.tau == pytest.approx(2.5)

    def test_percentile_left_tail(self):
        lls = list(np.arange(1000.0))
        c = fit_cutoff(lls, method="percentile", tail_mass=0.005)
        below = np.mean(np.array(lls) < c.tau)
        assert below == pytest.approx(0.005, abs=1e-3)

    def test_needs_two_values(self):
        with pytest.raises(ValidationError):
            fit_cutoff([1.0])


class TestConditionalScore:
    CUT = Cutoff("mad3", tau=-100.0)

    def test_below_cutoff_filtered(self):
        s = conditional_score(-101.0, 42.0, self.CUT)
        assert s.tier == Tier.FILTERED and s.value == -101.0

    def test_boundary_passes(self):
        s = conditional_score(-100.0, 42.0, self.CUT)
        assert s.tier == Tier.PASSED and s.value == 42.0

    def test_filtered_never_passed_when_below(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            ll = float(rng.uniform(-200, -100.0000001))
            assert conditional_score(ll, 0.0, self.CUT).tier == Tier.FILTERED


class TestScoreOrder:
    def test_every_filtered_below_every_passed(self):
        fs = [filtered(v) for v in (-5.0, 100.0, 1e9)]
        ps = [passed(v) for v in (-1e9, 0.0)]
        for f in fs:
            for p in ps:
                assert f < p

    def test_ties_compare_equal(self):
        assert passed(1.5) == passed(1.5)
        assert filtered(-3.0) == filtered(-3.0)
        assert not (passed(1.5) < passed(1.5))

    def test_within_tier_by_value(self):
        assert filtered(-10.0) < filtered(-5.0)
        assert passed(1.0) < passed(2.0)


class TestIcScore:
    def test_arithmetic(self):
        assert ic_score(0.0, 10.0) == -10.0

    def test_constant_shift_preserves_auroc(self):
        rng = np.random.default_rng(2)
        id_ll = rng.normal(-100, 5, size=40)
        ood_ll = rng.normal(-120, 5, size=40)
        id_bits = rng.uniform(100, 200, size=40)
        ood_bits = rng.uniform(100, 200, size=40)
        base = auroc([passed(-ic_score(l, b)) for l, b in zip(id_ll, id_bits)],
                     [passed(-ic_score(l, b)) for l, b in zip(ood_ll, ood_bits)])
        shift = auroc([passed(-ic_score(l, b + 77.0)) for l, b in zip(id_ll, id_bits)],
                      [passed(-ic_score(l, b + 77.0)) for l, b in zip(ood_ll, ood_bits)])
        assert base == pytest.approx(shift, abs=1e-12)

    def test_lower_is_more_id(self):
        # lower S means the model's bits beat the compressor's by more
        assert ic_score(-10.0, 5.0) > ic_score(-1.0, 5.0)


class TestLratScore:
    def test_identical_models_zero(self):
        assert lrat_score(-55.0, -55.0) == 0.0

    def test_arithmetic(self):
        assert lrat_score(-100.0, -120.0) == 20.0


def test_monotone_transform_of_passed_keeps_order():
    rng = np.random.default_rng(3)
    vals = rng.normal(size=30)
    scores = sorted(passed(v) for v in vals)
    mapped = sorted(passed(math.exp(v)) for v in vals)
    assert [s.value for s in scores] == sorted(s.value for s in scores)
    assert all(a.value <= b.value for a, b in zip(mapped, mapped[1:]))
