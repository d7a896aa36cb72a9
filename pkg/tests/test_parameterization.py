"""Scaling-rule tables: init std, learning rate, multipliers per scheme."""

import math

import pytest

from suparlab.errors import DomainError
from suparlab.parameterization import (BaseHyperparams, LayerRole, ParamScheme,
                                       attn_logit_scale, forward_multiplier,
                                       init_std, layer_lr, scaling_table)

BASE = BaseHyperparams()
H = LayerRole.HIDDEN
E = LayerRole.EMBEDDING
U = LayerRole.UNEMBEDDING


def test_scheme_parse_aliases():
    assert ParamScheme.parse("SUPAR") is ParamScheme.SUPAR
    assert ParamScheme.parse("mup_supar_init_only") is ParamScheme.MUP_SUPAR_INIT_ONLY
    with pytest.raises(DomainError):
        ParamScheme.parse("ntk")


def test_sp_is_scale_free():
    for m_d in (0.5, 1.0, 4.0):
        for m_rho in (1.0, 0.25, 0.0625):
            assert init_std(H, ParamScheme.SP, BASE, m_d, m_rho) == BASE.sigma_base
            assert layer_lr(H, ParamScheme.SP, "adam", BASE, m_d, m_rho) == BASE.eta_base


def test_mup_hidden_corrects_width_only():
    m_d, m_rho = 4.0, 0.25
    assert init_std(H, ParamScheme.MUP, BASE, m_d, m_rho) == \
        pytest.approx(BASE.sigma_base / 2.0, rel=1e-12)
    assert layer_lr(H, ParamScheme.MUP, "adam", BASE, m_d, m_rho) == \
        pytest.approx(BASE.eta_base / 4.0, rel=1e-12)


def test_supar_hidden_corrects_width_and_density():
    m_d, m_rho = 4.0, 0.25
    assert init_std(H, ParamScheme.SUPAR, BASE, m_d, m_rho) == \
        pytest.approx(BASE.sigma_base / math.sqrt(1.0), rel=1e-12)  # m_d*m_rho = 1
    assert layer_lr(H, ParamScheme.SUPAR, "adam", BASE, m_d, m_rho) == \
        pytest.approx(BASE.eta_base / 1.0, rel=1e-12)
    # and separately in each axis
    assert init_std(H, ParamScheme.SUPAR, BASE, 1.0, 0.25) == \
        pytest.approx(BASE.sigma_base * 2.0, rel=1e-12)
    assert layer_lr(H, ParamScheme.SUPAR, "adam", BASE, 1.0, 0.0625) == \
        pytest.approx(BASE.eta_base * 16.0, rel=1e-12)


def test_supar_collapses_to_mup_at_full_density():
    for m_d in (0.5, 1.0, 2.0, 4.0):
        for role in (E, H, U):
            assert init_std(role, ParamScheme.SUPAR, BASE, m_d, 1.0) == \
                init_std(role, ParamScheme.MUP, BASE, m_d, 1.0)
            for opt in ("adam", "sgd"):
                assert layer_lr(role, ParamScheme.SUPAR, opt, BASE, m_d, 1.0) == \
                    layer_lr(role, ParamScheme.MUP, opt, BASE, m_d, 1.0)


def test_ablations_split_the_corrections():
    m_d, m_rho = 2.0, 0.25
    init_only = ParamScheme.MUP_SUPAR_INIT_ONLY
    lr_only = ParamScheme.MUP_SUPAR_LR_ONLY
    # init-only: supar init, mup lr
    assert init_std(H, init_only, BASE, m_d, m_rho) == \
        init_std(H, ParamScheme.SUPAR, BASE, m_d, m_rho)
    assert layer_lr(H, init_only, "adam", BASE, m_d, m_rho) == \
        layer_lr(H, ParamScheme.MUP, "adam", BASE, m_d, m_rho)
    # lr-only: mup init, supar lr
    assert init_std(H, lr_only, BASE, m_d, m_rho) == \
        init_std(H, ParamScheme.MUP, BASE, m_d, m_rho)
    assert layer_lr(H, lr_only, "adam", BASE, m_d, m_rho) == \
        layer_lr(H, ParamScheme.SUPAR, "adam", BASE, m_d, m_rho)


def test_embedding_rules_are_scheme_invariant_in_scale():
    for scheme in ParamScheme:
        assert init_std(E, scheme, BASE, 4.0, 0.25) == BASE.sigma_base
        assert layer_lr(E, scheme, "adam", BASE, 4.0, 0.25) == BASE.eta_base
        assert layer_lr(U, scheme, "adam", BASE, 4.0, 0.25) == BASE.eta_base


def test_forward_multipliers():
    assert forward_multiplier(E, ParamScheme.SP, BASE, 4.0) == 1.0
    assert forward_multiplier(U, ParamScheme.SP, BASE, 4.0) == 1.0
    assert forward_multiplier(E, ParamScheme.MUP, BASE, 4.0) == BASE.alpha_input
    assert forward_multiplier(U, ParamScheme.MUP, BASE, 4.0) == \
        pytest.approx(BASE.alpha_output / 4.0, rel=1e-12)
    assert forward_multiplier(H, ParamScheme.SUPAR, BASE, 4.0) == 1.0


def test_attn_logit_scale():
    assert attn_logit_scale(ParamScheme.SP, 64) == pytest.approx(0.125)
    for scheme in (ParamScheme.MUP, ParamScheme.SUPAR):
        assert attn_logit_scale(scheme, 64) == pytest.approx(1.0 / 64.0)
    with pytest.raises(DomainError):
        attn_logit_scale(ParamScheme.SP, 0)


def test_sgd_hidden_lr_folds_fan_in():
    m_d, m_rho = 2.0, 0.5
    got = layer_lr(H, ParamScheme.SUPAR, "sgd", BASE, m_d, m_rho)
    assert got == pytest.approx(BASE.eta_base / (m_d * m_rho * BASE.d_base), rel=1e-12)
    got = layer_lr(H, ParamScheme.MUP, "sgd", BASE, m_d, m_rho)
    assert got == pytest.approx(BASE.eta_base / (m_d * BASE.d_base), rel=1e-12)
    assert layer_lr(H, ParamScheme.SP, "sgd", BASE, m_d, m_rho) == BASE.eta_base


def test_default_base_values():
    assert BASE.sigma_base == pytest.approx(0.08665602)
    assert BASE.eta_base == pytest.approx(0.0162)
    assert BASE.alpha_input == pytest.approx(9.1705)
    assert BASE.alpha_output == pytest.approx(1.0951835)
    assert BASE.d_base == 256
    assert BASE.rho_base == 1.0


def test_domain_errors():
    with pytest.raises(DomainError):
        init_std(H, ParamScheme.SUPAR, BASE, 0.0, 1.0)
    with pytest.raises(DomainError):
        init_std(H, ParamScheme.SUPAR, BASE, 1.0, 1.5)
    with pytest.raises(DomainError):
        layer_lr(H, ParamScheme.SUPAR, "rmsprop", BASE, 1.0, 1.0)
    with pytest.raises(DomainError):
        BaseHyperparams(sigma_base=-1.0)
    with pytest.raises(DomainError):
        BaseHyperparams(rho_base=0.0)


def test_scaling_table_renders_all_roles():
    text = scaling_table(ParamScheme.SUPAR, BASE, 512, 0.25, 64)
    for token in ("embedding", "hidden", "unembedding", "vector", "attn logits"):
        assert token in text
    assert "m_d=2" in text and "m_rho=0.25" in text
