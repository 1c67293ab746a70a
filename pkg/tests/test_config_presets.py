import math

import pytest

from taxis_cascade import kinetics as K
from taxis_cascade import solver as S
from taxis_cascade.config import Config, format_config, load_config, parse_config
from taxis_cascade.errors import StructuralError
from taxis_cascade.presets import preset, preset_names


def test_parse_format_round_trip_all_presets():
    for name in preset_names():
        cfg = preset(name).config
        text = format_config(cfg)
        back = parse_config(text, label=cfg.label)
        assert back == cfg.resolved()
        # a second round is a fixed point
        assert format_config(back) == text


def test_parse_errors_carry_context():
    with pytest.raises(StructuralError) as err:
        parse_config("[grid]\nnx = not-a-number\n")
    assert "nx" in str(err.value)
    with pytest.raises(StructuralError) as err:
        parse_config("[grid\nnx = 4\n")  # malformed section header
    assert "line" in str(err.value).lower() or "parse" in str(err.value).lower()


def test_case_sensitive_envelope_keys():
    cfg = parse_config("[kinetics]\nk_f = 2.0\nK_f = 0.5\n")
    assert cfg.k_f == 2.0 and cfg.K_f == 0.5


def test_unknown_recipe_and_law():
    cfg = parse_config("[initial]\nu = vortex(1.0)\n")
    with pytest.raises(StructuralError):
        cfg.build_initial(cfg.build_grid())
    cfg2 = parse_config("[kinetics]\nf_law = cubicish\n")
    with pytest.raises(StructuralError):
        cfg2.build_kinetics()


def test_random_recipe_needs_seed_and_is_reproducible():
    import numpy as np
    base = ("[grid]\nnx = 8\nny = 8\n"
            "[initial]\nu = random(0.1, 0.5)\nv = constant(1.0)\nw = constant(0.0)\n")
    cfg = parse_config(base)
    with pytest.raises(StructuralError):
        cfg.build_initial(cfg.build_grid())
    cfg2 = parse_config(base + "seed = 42\n")
    a = cfg2.build_initial(cfg2.build_grid())
    b = cfg2.build_initial(cfg2.build_grid())
    assert np.array_equal(a.u0, b.u0)
    assert 0.1 <= a.u0.min() and a.u0.max() <= 0.5


def test_file_loading(tmp_path):
    p = tmp_path / "case.ini"
    p.write_text(format_config(preset("thm1-core").config))
    cfg = load_config(p)
    assert cfg.label == "case"
    assert cfg.nx == 40


def test_preset_gate_expectations_match():
    for name in preset_names():
        pre = preset(name)
        ks = pre.config.build_kinetics()
        params = S.ModelParams(mu=pre.config.mu, epsilon=pre.config.epsilon,
                               resupply=pre.config.build_resupply(), kinetics=ks)
        assert K.global_existence_gate(ks).passed == pre.expect_existence, name
        assert K.eventual_regularity_gate(ks, params).passed == pre.expect_regularity, name
        assert K.validate_envelope(ks).holds, name


def test_unknown_preset():
    with pytest.raises(StructuralError):
        preset("thm9-wild")


def test_subquadratic_margin():
    ks = preset("thm1-subquadratic-g").config.build_kinetics()
    gate = K.global_existence_gate(ks)
    assert gate.passed
    assert gate.margins["min_condition"] == pytest.approx(1.8 - 1.4, abs=1e-12)


def test_thm2_preset_resupply_integrable():
    cfg = preset("thm2-decay").config
    r = cfg.build_resupply()
    assert r.r_double_star == pytest.approx(r.amplitude / cfg.decay_lambda)
    assert math.isfinite(r.r_double_star)


def test_gate_fail_alpha_margins():
    ks = preset("gate-fail-alpha").config.build_kinetics()
    gate = K.global_existence_gate(ks)
    assert not gate.passed
    assert not gate.checks["alpha_supercritical"]  # 2.2 < 1 + sqrt(2)
