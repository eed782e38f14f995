import pytest

from doublephase.config import ConfigError, load_config, parse_config
from doublephase.operators import GradientTerm, NonlinearitySpec, PowerTerm

BASE = """
theorem = T41
mesh.n = 8
f.power = 1.0:2.5
g.power = 1.0:2.0
zeta.margin = 0.5   # trailing comment
"""


class TestParse:
    def test_base(self):
        cfg = parse_config(BASE)
        assert cfg.theorem == "T41" and cfg.n == 8
        assert cfg.spec.interior == (PowerTerm(1.0, 2.5),)
        assert cfg.zeta is None and cfg.zeta_margin == 0.5
        assert cfg.p == 1.4 and cfg.q == 1.8

    def test_terms_and_growth(self):
        cfg = parse_config("""
theorem = T31
f.gradient = 0.05:0.5, 0.01:0.2
f.constant = 0.1
p = 1.5
zeta = 0.1
growth.r1 = 1.5
growth.r2 = 1.5
growth.a1 = 0.06
""")
        assert cfg.spec.gradient == (GradientTerm(0.05, 0.5), GradientTerm(0.01, 0.2))
        assert cfg.spec.growth.a1 == 0.06 and cfg.spec.f_constant == 0.1

    def test_bool_and_tolerances(self):
        cfg = parse_config(BASE + "strict_mode = no\ntol.residual = 1e-7\n")
        assert cfg.strict_mode is False and cfg.residual_tol == 1e-7

    def test_to_dict_round_trip(self):
        cfg = parse_config(BASE)
        d = cfg.to_dict()
        assert list(d["spec"]["interior"]) == [{"coeff": 1.0, "exponent": 2.5}]
        assert NonlinearitySpec.from_dict(d["spec"]) == cfg.spec

    def test_weight(self, space4):
        cfg = parse_config(BASE + "mu = constant:0.3\n")
        assert cfg.weight(space4).per_triangle(space4).max() == pytest.approx(0.3)

    def test_load(self, tmp_path):
        p = tmp_path / "s.cfg"
        p.write_text(BASE)
        cfg, text = load_config(p)
        assert text == BASE and cfg.n == 8


class TestErrors:
    @pytest.mark.parametrize("extra, field", [
        ("bogus = 1", "bogus"),
        ("mesh.n = eight", "mesh.n"),
        ("mesh.n = 0", "mesh.n"),
        ("p = 0.9", "p"),
        ("q = 3.0", "p, q"),
        ("beta = -1", "beta"),
        ("theta = 1.5", "theta"),
        ("damping = 0", "damping"),
        ("mu = quadratic", "mu"),
        ("zeta = 3", "zeta, zeta.margin"),
        ("f.gradient = 0.1:0.2", "f.gradient"),
        ("f.power = 1.0", "f.power"),
        ("p = nan", "p"),
        ("boundary_rule = simpson", "boundary_rule"),
        ("growth.a1 = 1", "growth.r1"),
        ("strict_mode = maybe", "strict_mode"),
    ])
    def test_names_field(self, extra, field):
        text = BASE.replace("f.power = 1.0:2.5\n", "") + extra + "\n"
        if not extra.startswith("f.power"):
            text += "f.power = 1.0:2.5\n"
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert str(info.value).startswith(field)

    def test_duplicate(self):
        with pytest.raises(ConfigError, match="given twice"):
            parse_config(BASE + "mesh.n = 4\n")

    def test_missing_theorem(self):
        with pytest.raises(ConfigError, match="theorem: missing"):
            parse_config("p = 1.5\n")

    def test_bad_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config("theorem = T41\njust words\n")

    def test_convection_needs_growth(self):
        with pytest.raises(ConfigError, match="growth"):
            parse_config("theorem = T31\nzeta = 0.1\n")

    def test_theta_override(self):
        cfg = parse_config(BASE + "theta = 1.5\nallow_theta_above_one = true\n")
        assert cfg.theta == 1.5

    def test_eigen_only_skips_exponent_checks(self):
        assert parse_config("theorem = eigen_only\np = 2\nq = 5\n").p == 2.0
