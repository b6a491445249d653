import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from fraclab import study
from fraclab.cli import main
from fraclab.errors import StudyRecord
from fraclab.mesh import GradedFamilyConfig, TriMesh, _graded_radii, build_disk_mesh, write_mesh
from fraclab.solver import SolverError
from fraclab.study import (CSV_COLUMNS, GRADED_LADDER, PRESETS, UNIFORM_LADDER, StudyConfig, emit_csv, emit_svg, format_config,
                           interior_rate, load_config, parse_config_text, read_csv, run_study,
                           summarize)

SVG = "{http://www.w3.org/2000/svg}"
TINY = (0.5, 0.35, 0.25)


def rec(s=0.5, level=0, N=100, err=0.1, **kw):
    return StudyRecord("t", "custom", s, 1.0, level, 0.1 * 0.7**level, N, err_l2=err,
                       err_energy=2 * err, err_local_hs=err / 3, quad_order="q", **kw)


# --- config ------------------------------------------------------------------

def test_preset_defaults_and_theory_table():
    for name in ("fig1", "fig2", "fig3", "fig4"):
        p = PRESETS[name]
        cfg = StudyConfig(preset=name)
        assert cfg.mu == p.mu and cfg.s_values == p.s_values and cfg.levels == p.levels
        for s in np.linspace(0.05, 0.95, 19):
            assert -1.0 < p.theory(s) < 0
    assert PRESETS["fig1"].theory(0.7) == -0.5
    assert PRESETS["fig2"].theory(0.2) == pytest.approx(-0.6)
    assert PRESETS["fig2"].theory(0.8) == pytest.approx(-0.75)
    assert PRESETS["fig3"].theory(0.4) == pytest.approx(-0.45)
    assert PRESETS["fig4"].theory(0.8) == pytest.approx(-0.6)
    assert PRESETS["custom"].theory is None


def test_interior_rate_tables():
    assert interior_rate(0.2, graded=False) == pytest.approx(0.7)
    assert interior_rate(0.8, graded=False) == 1.0
    assert interior_rate(0.2, graded=True) == pytest.approx(1.2)
    assert interior_rate(0.8, graded=True) == pytest.approx(1.2)
    # in N units (h ~ N^-1/2) these are the fig3/fig4 exponents
    for s in (0.2, 0.4, 0.6, 0.8):
        assert -interior_rate(s, False) / 2 == pytest.approx(PRESETS["fig3"].theory(s))
        assert -interior_rate(s, True) / 2 == pytest.approx(PRESETS["fig4"].theory(s))


@pytest.mark.parametrize("bad", [
    dict(s_values=(0.5, 1.0)), dict(levels=(0.1, 0.2)), dict(ball_radius=0.9, ball_center=(0.2, 0.0)),
    dict(preset="fig9"), dict(convention="weird"), dict(solver="lu"), dict(mu=0.5),
    dict(far_ratio=3.0, wide_ratio=2.0),
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        StudyConfig(**bad)


def test_config_text_roundtrip(tmp_path):
    cfg = StudyConfig(preset="fig3", s_values=(0.2, 0.4), levels=(0.25, 0.125), out=str(tmp_path),
                      R_aux=1.75, deterministic=False)
    text = format_config(cfg)
    back = StudyConfig(**parse_config_text(text))
    assert back == cfg
    assert "R_aux = 1.75" in text
    auto = StudyConfig(**parse_config_text("preset = fig1\nR_aux = auto  # from the mesh\n"))
    assert math.isnan(auto.R_aux)
    with pytest.raises(ValueError, match="unknown key"):
        parse_config_text("bogus = 1")
    with pytest.raises(ValueError, match="line 2"):
        parse_config_text("preset = fig1\nno equals sign")


def test_overrides_beat_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("preset = fig2\ns_values = 0.2, 0.4\nball_radius = 0.3\n")
    cfg = load_config(p, {"ball_radius": 0.25})
    assert cfg.ball_radius == 0.25 and cfg.s_values == (0.2, 0.4) and cfg.mu == 2.0


# --- CSV ---------------------------------------------------------------------

def test_csv_header_only_and_one_record(tmp_path):
    p = tmp_path / "a.csv"
    emit_csv([], p)
    assert p.read_text() == ",".join(CSV_COLUMNS) + "\n"
    emit_csv([rec()], p)
    assert len(p.read_text().splitlines()) == 2


def test_csv_roundtrip_12_digits(tmp_path):
    rs = [rec(err=math.pi * 10**-k, N=10 * 4**k, level=k) for k in range(4)]
    p = tmp_path / "a.csv"
    emit_csv(rs, p)
    back = read_csv(p)
    for a, b in zip(rs, back):
        for c in CSV_COLUMNS:
            va, vb = getattr(a, c), getattr(b, c)
            if isinstance(va, float):
                assert vb == float(f"{va:.12g}")
            else:
                assert va == vb
    emit_csv(back, tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_bytes() == p.read_bytes()


def test_csv_io_error_names_path(tmp_path):
    bad = tmp_path / "missing" / "x.csv"
    with pytest.raises(OSError, match="missing"):
        emit_csv([rec()], bad)


# --- SVG ---------------------------------------------------------------------

def _parse(path):
    root = ET.parse(path).getroot()
    lines = root.findall(f".//{SVG}polyline[@class='data']")
    refs = root.findall(f".//{SVG}path[@class='reference']")
    return root, lines, refs


def _pts(poly):
    return np.array([[float(v) for v in p.split(",")] for p in poly.get("points").split()])


def test_svg_reference_parallel_to_power_law(tmp_path):
    N = np.array([100, 300, 1000, 3000])
    rs = [rec(N=int(n), err=2.0 * n**-0.5, level=k) for k, n in enumerate(N)]
    path = emit_svg(rs, lambda s: -0.5, tmp_path / "p.svg")
    _, lines, refs = _parse(path)
    assert len(lines) == 1 and len(refs) == 1
    xy = _pts(lines[0])
    data_slope = (xy[-1, 1] - xy[0, 1]) / (xy[-1, 0] - xy[0, 0])
    d = refs[0].get("d").replace("M", "").replace("L", "").split()
    (x0, y0), (x1, y1) = [tuple(map(float, p.split(","))) for p in d]
    assert (y1 - y0) / (x1 - x0) == pytest.approx(data_slope, rel=1e-3)
    # anchored at the last data point
    assert (x1, y1) == pytest.approx(tuple(xy[-1]), abs=1e-2)
    assert "6,4" in refs[0].get("stroke-dasharray")


def test_svg_four_series_with_legend(tmp_path):
    rs = [rec(s=s, N=n, err=n**-0.5 * (1 + s)) for s in (0.2, 0.4, 0.6, 0.8) for n in (100, 400)]
    root, lines, refs = _parse(emit_svg(rs, PRESETS["fig3"].theory, tmp_path / "q.svg"))
    assert len(lines) == 4 and len(refs) == 4
    assert {l.get("stroke") for l in lines}.__len__() == 4
    legend = root.find(f".//{SVG}g[@class='legend']")
    assert legend is not None
    shapes = [child.tag for child in legend if child.tag != f"{SVG}text"]
    assert len(set(shapes)) >= 3 and len(shapes) == 4
    text = (tmp_path / "q.svg").read_text()
    assert "href" not in text  # self-contained


def test_svg_needs_two_records(tmp_path):
    with pytest.raises(ValueError):
        emit_svg([rec()], -0.5, tmp_path / "x.svg")


# --- runner ------------------------------------------------------------------

def test_tiny_study_outputs_and_determinism(tmp_path):
    cfgs = [StudyConfig(preset="fig1", s_values=(0.5,), levels=TINY, out=str(tmp_path / d))
            for d in ("a", "b")]
    res = [run_study(c) for c in cfgs]
    a, b = res
    assert len(a.records) == 3 and a.complete
    for key in ("csv", "rates", "config", "svg"):
        assert (tmp_path / "a" / a.paths[key].split("/")[-1]).exists()
    assert open(a.paths["csv"], "rb").read() == open(b.paths["csv"], "rb").read()
    r = a.rate(0.5, "err_l2")
    assert r.theory == -0.5 and r.tolerance == 0.1
    # the resolved config reproduces the run
    again = load_config(a.paths["config"])
    assert format_config(again) == format_config(cfgs[0])
    rec0 = a.records[0]
    assert rec0.meta["galerkin_gap"] < 1e-10
    assert rec0.quad_order == cfgs[0].quad().label()


def test_failed_level_keeps_prior_levels(tmp_path, monkeypatch):
    real = study.solve_level

    def flaky(cfg, s, level, h, quad=None):
        if level == 1:
            raise SolverError("injected")
        return real(cfg, s, level, h, quad)

    monkeypatch.setattr(study, "solve_level", flaky)
    res = run_study(StudyConfig(s_values=(0.5,), levels=TINY, out=str(tmp_path)))
    assert [r.level for r in res.records] == [0]
    assert not res.complete and not res.passed
    assert res.failures[0][:2] == (0.5, 1)
    assert len(read_csv(res.paths["csv"])) == 1


def test_summarize_scores_shared_records():
    rs = [rec(s=0.4, N=n, level=k, err=n**-0.45) for k, n in enumerate((100, 400, 1600))]
    for r, h in zip(rs, (0.3, 0.2, 0.1)):
        r.h = h
    cfg = StudyConfig(preset="fig3", s_values=(0.4,), levels=(0.3, 0.2, 0.1))
    res = summarize(cfg, rs)
    loc = res.rate(0.4, "err_local_hs")
    assert loc.theory == pytest.approx(-0.45) and loc.passed
    (s, slope, glob, ok), = res.interior_checks()
    assert slope == pytest.approx(-0.45) and glob == -0.25 and ok


# --- command line ------------------------------------------------------------

def test_cli_run_exit_codes(tmp_path, capsys):
    code = main(["run", "--preset", "custom", "--s", "0.5", "--levels", "0.5,0.35,0.25",
                 "--out", str(tmp_path), "--quiet"])
    assert code == 0
    assert "outputs:" in capsys.readouterr().out
    assert main(["run", "--preset", "custom", "--s", "1.5", "--out", str(tmp_path)]) == 1


def test_cli_run_reports_failed_comparison(tmp_path, monkeypatch):
    cfg = tmp_path / "c.cfg"
    # a preset whose theory cannot be met to zero tolerance on three coarse levels
    cfg.write_text("preset = fig1\ns_values = 0.5\nlevels = 0.5, 0.35, 0.25\n")
    original = study.PRESETS["fig1"]
    monkeypatch.setitem(study.PRESETS, "fig1", study.Preset(
        "fig1", 1.0, (0.5,), TINY, "err_l2", 0.0, lambda s: -5.0, -0.25))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 2
    assert study.PRESETS["fig1"] is not original


def test_cli_validate_mesh(tmp_path, capsys):
    m = build_disk_mesh(GradedFamilyConfig(h=0.25))
    good = tmp_path / "good.mesh"
    write_mesh(m, good)
    assert main(["validate-mesh", str(good)]) == 0
    assert "PASS" in capsys.readouterr().out
    V = m.vertices.copy()
    i, j, k = m.triangles[5]
    free = [v for v in (i, j, k) if not m.boundary_vertex[v]][0]
    rest = [v for v in (i, j, k) if v != free]
    V[free] = 0.5 * (V[rest[0]] + V[rest[1]]) + 1e-3 * (V[free] - 0.5 * (V[rest[0]] + V[rest[1]]))
    bad = tmp_path / "bad.mesh"
    write_mesh(TriMesh(V, m.triangles.copy(), m.boundary_vertex.copy(), 0.25), bad)
    assert main(["validate-mesh", str(bad), "--h", "0.25"]) == 2
    assert main(["validate-mesh", str(tmp_path / "nope.mesh")]) == 1


def test_cli_oracle_check(capsys):
    assert main(["oracle-check", "--seed", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 12 and all(line.endswith("PASS") for line in out)


@pytest.mark.parametrize("mu,ladder", [(1.0, UNIFORM_LADDER), (2.0, GRADED_LADDER)])
def test_ladders_put_a_ring_on_the_ball(mu, ladder):
    inside = []
    for h in ladder:
        r = np.array(_graded_radii(GradedFamilyConfig(mu=mu, h=h)))
        r = r[r < 1.0]
        near = r[np.argmin(np.abs(r - 0.3))]
        assert abs(near - 0.3) <= 0.02 * 0.3
        inside.append(int((r <= near + 1e-12).sum()))
    assert all(b > a for a, b in zip(inside, inside[1:]))
