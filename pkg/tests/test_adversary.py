import dataclasses
import json

import numpy as np
import pytest

from splineortho.adversary import (
    AdversarialConfig, AdversarialSequence, adversarial_atom, control_sequence, divergence_experiment, generate,
    stage_from_grid, verify_lemma_properties,
)
from splineortho.errors import ContractError, FeasibilityError, PlacementError
from splineortho.knotseq import regularity_parameter


@pytest.mark.parametrize("k", [2, 3])
def test_small_configuration_passes_all_properties(k):
    adv = generate(AdversarialConfig(k=k, gamma=4, ell=1, delta=1e-4))
    rep = verify_lemma_properties(adv, A=2)
    assert rep.ok, rep.passed
    assert len(adv.stages) == 1 and adv.delta == pytest.approx(1e-4)


@pytest.mark.parametrize("k,ell", [(2, 4), (2, 8), (3, 6), (4, 5)])
def test_multi_stage_properties(k, ell):
    cfg = AdversarialConfig(k=k, gamma=4, ell=ell, delta=2.0 ** -4 / (2 * 2 ** (ell - 1)))
    adv = generate(cfg)
    rep = verify_lemma_properties(adv, A=cfg.A)
    assert rep.ok, rep.passed
    assert [s.n for s in adv.stages] == sorted(s.n for s in adv.stages)


def test_infeasible_configuration():
    cfg = AdversarialConfig(k=2, gamma=4, ell=20, A=2, delta=0.1)
    with pytest.raises(FeasibilityError) as exc:
        generate(cfg)
    assert exc.value.max_feasible == cfg.max_feasible_ell() == 0


def test_feasibility_limit_is_sharp():
    cfg = AdversarialConfig(k=2, ell=1, delta=1e-4)
    limit = cfg.max_feasible_ell()
    generate(dataclasses.replace(cfg, ell=limit))
    with pytest.raises(FeasibilityError):
        generate(dataclasses.replace(cfg, ell=limit + 1))


def test_gamma_target_too_small_is_infeasible():
    with pytest.raises(FeasibilityError):
        generate(AdversarialConfig(k=2, gamma=1.5, ell=3, delta=1e-4))


def test_config_validation():
    with pytest.raises(ContractError):
        AdversarialConfig(k=1)
    with pytest.raises(ContractError):
        AdversarialConfig(A=1)
    with pytest.raises(ContractError):
        AdversarialConfig(delta=0)


@pytest.mark.parametrize("k", [2, 3])
def test_regular_in_k_but_not_k_minus_one(k):
    cfg = AdversarialConfig(k=k, gamma=4, ell=5, delta=1e-4)
    adv = generate(cfg)
    seq = adv.seq
    assert regularity_parameter(seq, k, seq.n_max).gamma <= cfg.gamma
    assert regularity_parameter(seq, k - 1, seq.n_max).gamma > 10 * cfg.gamma


def test_control_is_k_minus_one_regular():
    for ell in (2, 4, 8):
        cfg = AdversarialConfig(k=2, ell=ell, delta=2.0 ** -4 / (2 * 2 ** (ell - 1)))
        seq = control_sequence(cfg)
        assert regularity_parameter(seq, 1, seq.n_max).gamma < 40
        assert sorted(seq.points) == sorted(generate(cfg).seq.points)


def test_duplicate_stage_violates_disjointness():
    adv = generate(AdversarialConfig(k=2, ell=3, delta=1e-3))
    bad = AdversarialSequence(adv.seq, [adv.stages[0], adv.stages[0], adv.stages[1]], adv.gamma)
    rep = verify_lemma_properties(bad, A=2)
    assert not rep.passed[1] and rep.witnesses[1] == (0, 1)


def test_wrong_cluster_violates_common_lambda():
    adv = generate(AdversarialConfig(k=2, ell=3, delta=1e-3))
    other = stage_from_grid(adv.seq, adv.stages[0].n - 1)
    bad = AdversarialSequence(adv.seq, [adv.stages[0], other], adv.gamma)
    rep = verify_lemma_properties(bad, A=2)
    assert not rep.passed[2]


def test_large_A_violates_separation():
    adv = generate(AdversarialConfig(k=2, ell=2, delta=1e-3))
    rep = verify_lemma_properties(adv, A=1e6)
    assert not rep.passed[6] and rep.passed[1]


def test_single_stage_pairwise_items_vacuous():
    adv = generate(AdversarialConfig(k=2, ell=1, delta=1e-3))
    rep = verify_lemma_properties(adv, A=2)
    assert rep.passed[1] and rep.passed[2] and rep.witnesses[1] is None


def test_stages_json_round_trip():
    adv = generate(AdversarialConfig(k=2, ell=3, delta=1e-3))
    obj = json.loads(adv.stages_json())
    assert obj["center"] == 0.5 and len(obj["stages"]) == 3
    assert obj["stages"][0]["Lambda"] == list(adv.stages[0].Lambda)


def test_adversarial_atom_values():
    atom = adversarial_atom(center=0.3, delta=1e-4)
    assert atom.valid
    assert atom(0.3 - 1e-4) == pytest.approx(2500.0)
    assert atom(0.3 + 1e-4) == pytest.approx(-2500.0)
    assert atom.interval == (pytest.approx(0.3 - 2e-4), pytest.approx(0.3 + 2e-4))


def test_adversarial_atom_placement():
    with pytest.raises(PlacementError):
        adversarial_atom(center=0.1, delta=0.1)
    with pytest.raises(PlacementError):
        adversarial_atom(center=0.5, delta=0.0)
    adv = generate(AdversarialConfig(k=2, ell=2, delta=1e-3))
    assert adversarial_atom(adv).interval[1] == pytest.approx(0.5 + 2e-3)


def test_single_rung_growth_row():
    table = divergence_experiment([1], AdversarialConfig(k=2), control=False)
    row = table.rows[0]
    assert row.G > 0 and row.stage_sum <= row.G * (1 + 1e-4)
    assert row.min_coeff_product > 0
    assert "ell,G" in table.to_csv()


def test_stage_sum_grows_and_coefficient_product_stays_bounded():
    table = divergence_experiment([2, 4, 6], AdversarialConfig(k=2), control=False)
    sums = [r.stage_sum for r in table.rows]
    assert sums == sorted(sums)
    prods = np.array([r.min_coeff_product for r in table.rows])
    assert prods.max() / prods.min() < 2
    slope, r2 = table.fit()
    assert slope > 0 and r2 > 0.9
