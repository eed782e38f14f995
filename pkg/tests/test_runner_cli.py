import json

import numpy as np
import pytest

from doublephase import runner
from doublephase.cli import main
from doublephase.io import read_vtk, write_vtk
from doublephase.mesh import build_unit_square_mesh
from doublephase.runner import (
    MANIFEST_VOLATILE,
    RunLoadError,
    emit_report,
    load_run,
    run,
    verify,
)

STEKLOV = """theorem = T41
mesh.n = 8
f.power = 1.0:2.5
g.power = 1.0:2.0
zeta.margin = 0.5
"""

ROBIN = """theorem = T43
mesh.n = 8
f.power = 1.0:2.5
zeta.margin = 0.5
beta = 1
"""

CONVECTION = """theorem = T31
mesh.n = 8
p = 1.5
f.constant = 0.1
f.gradient = 0.05:0.5
zeta = 0.1
growth.r1 = 1.5
growth.r2 = 1.5
growth.a1 = 0.05
growth.alpha1 = 0.1
growth.b1 = 0.016666666666666666
growth.b2 = 0.13333333333333333
growth.omega1 = 0.03333333333333333
"""

GATE_FAIL = CONVECTION.replace("0.05:0.5", "2.0:0.5").replace("growth.a1 = 0.05", "growth.a1 = 2.0") \
    .replace("growth.b1 = 0.016666666666666666", "growth.b1 = 0.6666666666666666") \
    .replace("growth.b2 = 0.13333333333333333", "growth.b2 = 1.4")

EIGEN = """theorem = eigen_only
mesh.n = 8
p = 2
boundary_rule = lumped
beta = 1
"""


def write(tmp_path, text, name="s.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def stable(d):
    return {k: v for k, v in d.items() if k not in MANIFEST_VOLATILE}


@pytest.fixture(scope="module")
def steklov_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    cfgp = root / "s.cfg"
    cfgp.write_text(STEKLOV)
    return run(cfgp, root / "out")


class TestRun:
    def test_layout(self, steklov_run):
        man, out = steklov_run
        assert man.passed
        assert (out / "manifest.json").is_file()
        for rel in man.outputs["fields"] + man.outputs["tables"]:
            assert (out / rel).is_file()
        d = json.loads((out / "manifest.json").read_text())
        assert d["passed"] and d["config_text"] == STEKLOV
        assert d["code_version"]

    def test_verify(self, steklov_run):
        checks = verify(steklov_run[1])
        assert checks and all(c.passed for c in checks), [c.to_dict() for c in checks]
        assert all(c.passed for c in verify(steklov_run[1] / "manifest.json"))

    def test_deterministic(self, steklov_run, tmp_path):
        man2, out2 = run(write(tmp_path, STEKLOV), tmp_path / "out")
        a = json.loads((steklov_run[1] / "manifest.json").read_text())
        b = json.loads((out2 / "manifest.json").read_text())
        assert stable(a) == stable(b)
        for rel in man2.outputs["fields"]:
            assert (steklov_run[1] / rel).read_text() == (out2 / rel).read_text()

    def test_tampered_field_fails_verify(self, steklov_run, tmp_path):
        import shutil

        copy = tmp_path / "copy"
        shutil.copytree(steklov_run[1], copy)
        path = copy / "fields" / "u_plus.vtk"
        pts, tris, fields = read_vtk(path)
        u = fields["u_plus"].copy()
        u[len(u) // 2] = -0.5
        write_vtk(path, build_unit_square_mesh(8), {"u_plus": u})
        checks = {c.name: c.passed for c in verify(copy)}
        assert not checks["plus_sign_pure"] and not checks["plus_negative_energy"]

    def test_report(self, steklov_run):
        text = emit_report(steklov_run[0])
        assert "Steklov first eigenvalue" in text
        assert text == emit_report(json.loads((steklov_run[1] / "manifest.json").read_text()))

    def test_robin_family(self, tmp_path):
        man, out = run(write(tmp_path, ROBIN), tmp_path / "out")
        assert man.passed
        assert all(c.passed for c in verify(out))

    def test_eigen_only(self, tmp_path):
        man, out = run(write(tmp_path, EIGEN), tmp_path / "out")
        assert man.passed
        assert man.eigenvalues["robin_oracle_rel_delta"] < 1e-6
        assert all(c.passed for c in verify(out))

    def test_convection(self, tmp_path):
        man, out = run(write(tmp_path, CONVECTION), tmp_path / "out")
        assert man.passed and man.conditions["condA"]
        assert all(c.passed for c in verify(out))
        assert "(A) 1 - b1 - b2/lambda_R" in emit_report(man)

    def test_gate_failure_recorded(self, tmp_path):
        man, out = run(write(tmp_path, GATE_FAIL), tmp_path / "out")
        assert not man.passed
        assert not man.conditions["condA"] and not man.conditions["condB"]
        assert "solution" not in " ".join(man.outputs["fields"])

    def test_unique_directories(self, tmp_path):
        cfgp = write(tmp_path, EIGEN)
        _, a = run(cfgp, tmp_path / "out")
        _, b = run(cfgp, tmp_path / "out")
        assert a != b


class TestAtomicity:
    def test_failed_write_leaves_nothing(self, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise OSError("disk full")

        monkeypatch.setattr(runner, "write_json", boom)
        with pytest.raises(OSError):
            run(write(tmp_path, EIGEN), tmp_path / "out")
        assert list((tmp_path / "out").iterdir()) == []

    def test_load_rejects_incomplete(self, tmp_path):
        tmp = tmp_path / ".T41-x.abc.tmp"
        tmp.mkdir()
        (tmp / "manifest.json").write_text("{}")
        with pytest.raises(RunLoadError, match="incomplete"):
            load_run(tmp)
        with pytest.raises(RunLoadError, match="no manifest"):
            load_run(tmp_path)

    def test_load_rejects_missing_output(self, steklov_run, tmp_path):
        import shutil

        copy = tmp_path / "copy"
        shutil.copytree(steklov_run[1], copy)
        (copy / steklov_run[0].outputs["fields"][0]).unlink()
        with pytest.raises(RunLoadError, match="missing"):
            load_run(copy)


class TestCli:
    def test_run_and_verify(self, tmp_path, capsys):
        assert main(["run", str(write(tmp_path, EIGEN)), "--out", str(tmp_path / "out")]) == 0
        out = capsys.readouterr().out
        assert "Robin first eigenvalue" in out
        run_dir = out.strip().splitlines()[-1].split("output: ")[1]
        assert main(["verify", run_dir]) == 0
        assert "[PASS]" in capsys.readouterr().out

    def test_config_error_exit(self, tmp_path, capsys):
        assert main(["run", str(write(tmp_path, "theorem = T99\n")), "--out", str(tmp_path)]) == 2
        assert "config error: theorem" in capsys.readouterr().err

    def test_failed_checks_exit(self, tmp_path):
        assert main(["run", str(write(tmp_path, GATE_FAIL)), "--out", str(tmp_path / "out")]) == 1

    def test_verify_missing(self, tmp_path):
        assert main(["verify", str(tmp_path / "nothing")]) == 2

    def test_pipeline_error_exit(self, tmp_path, capsys):
        # superlinear f required for truncation
        bad = STEKLOV.replace("f.power = 1.0:2.5", "f.power = 1.0:1.6")
        assert main(["run", str(write(tmp_path, bad)), "--out", str(tmp_path / "out")]) == 1
        assert "pipeline error" in capsys.readouterr().err

    def test_suite_subset(self, capsys):
        assert main(["suite", "1", "4"]) == 0
        out = capsys.readouterr().out
        assert "2/2 criteria passed" in out

    def test_module_entry(self):
        import subprocess
        import sys

        r = subprocess.run([sys.executable, "-m", "doublephase", "--help"], capture_output=True, text=True)
        assert r.returncode == 0 and "verify" in r.stdout
