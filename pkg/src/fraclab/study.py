"""Convergence studies on the unit disk with f = 1: presets, runner, CSV/SVG output."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .analytic import GetoorSolution, nodal_interpolant
from .assembly import AssemblyError, assemble_stiffness, assemble_subdomain_gram
from .errors import FIELDS, StudyRecord, energy_error, fit_rate, l2_error, local_hs_error
from .mesh import (GradedFamilyConfig, MeshError, ball_submesh, build_aux_band, build_disk_mesh,
                   default_R_aux)
from .quadrature import KernelParams, QuadConfig
from .solver import SolverError, solve_cg, solve_cholesky

log = logging.getLogger(__name__)

CSV_COLUMNS = ("study", "preset", "s", "mu", "level", "h", "N", "err_l2", "err_energy",
               "err_local_hs", "convention", "quad_order")

# Both ladders put a natural vertex ring on r = 0.3, so the whole-element ball
# B(0, 0.3) gains one ring per level without the anchor stretching the interior.
# uniform: 10, 20, 30, 40 rings; graded (mu = 2): 2, 3, 4, 5 rings inside the ball
UNIFORM_LADDER = (0.1156, 0.0578, 0.0385, 0.0289)
GRADED_LADDER = (0.198, 0.1305, 0.0975, 0.0775)


def interior_rate(s, graded):
    """Interior H^s rate in powers of h (up to logs) for smooth data."""
    if graded:
        return s + 1.0 if s <= 0.5 else 2.0 - s
    return s + 0.5 if s <= 0.5 else 1.0


@dataclass(frozen=True)
class Preset:
    name: str
    mu: float
    s_values: tuple
    levels: tuple
    field: str
    tolerance: float
    theory: object  # callable s -> exponent of N, or None
    global_energy: float = float("nan")  # theoretical global energy exponent of N


PRESETS = {
    "fig1": Preset("fig1", 1.0, (0.5, 0.6, 0.7, 0.8, 0.9), UNIFORM_LADDER, "err_l2", 0.10,
                   lambda s: -0.5, -0.25),
    "fig2": Preset("fig2", 2.0, (0.2, 0.4, 0.6, 0.8), GRADED_LADDER, "err_l2", 0.10,
                   lambda s: -min(0.5 + 0.5 * s, 0.75), -0.5),
    "fig3": Preset("fig3", 1.0, (0.2, 0.4, 0.6, 0.8), UNIFORM_LADDER, "err_local_hs", 0.15,
                   lambda s: -min(0.25 + 0.5 * s, 0.5), -0.25),
    "fig4": Preset("fig4", 2.0, (0.2, 0.4, 0.6, 0.8), GRADED_LADDER, "err_local_hs", 0.15,
                   lambda s: -min(0.5 + 0.5 * s, 1.0 - 0.5 * s), -0.5),
    "custom": Preset("custom", 1.0, (0.5,), UNIFORM_LADDER, "err_l2", 0.10, None),
}

# the interior rate must beat the global energy rate by this margin
INTERIOR_MARGIN = 0.1


@dataclass
class StudyConfig:
    preset: str = "custom"
    study: str = ""
    s_values: tuple = ()
    mu: float = float("nan")
    levels: tuple = ()
    ball_center: tuple = (0.0, 0.0)
    ball_radius: float = 0.3
    far_degree: int = QuadConfig.far_degree
    near_degree: int = QuadConfig.near_degree
    touching_points: int = QuadConfig.touching_points
    far_ratio: float = QuadConfig.far_ratio
    mid_ratio: float = QuadConfig.mid_ratio
    near_max_depth: int = QuadConfig.near_max_depth
    tail_degree: int = QuadConfig.tail_degree
    vertex_points: int = QuadConfig.vertex_points
    wide_degree: int = QuadConfig.wide_degree
    wide_ratio: float = QuadConfig.wide_ratio
    R_aux: float = float("nan")  # nan -> chosen from the boundary mesh size
    out: str = "fraclab-out"
    convention: str = "plain"  # local seminorm: plain | operator
    deterministic: bool = True
    threads: int = 1
    solver: str = "cholesky"

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        p = PRESETS[self.preset]
        if not self.study:
            self.study = self.preset
        if not self.s_values:
            self.s_values = p.s_values
        if not self.levels:
            self.levels = p.levels
        if math.isnan(self.mu):
            self.mu = p.mu
        self.s_values = tuple(float(s) for s in self.s_values)
        self.levels = tuple(float(h) for h in self.levels)
        self.ball_center = tuple(float(c) for c in self.ball_center)
        self.validate()

    def validate(self):
        if not all(0.0 < s < 1.0 for s in self.s_values):
            raise ValueError(f"s_values must lie in (0, 1): {self.s_values}")
        if any(b >= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError(f"levels must be strictly decreasing: {self.levels}")
        if not all(h > 0 for h in self.levels):
            raise ValueError("levels must be positive")
        if not self.mu >= 1.0:
            raise ValueError("mu must be at least 1")
        if len(self.ball_center) != 2 or not self.ball_radius > 0:
            raise ValueError("ball needs a 2D center and a positive radius")
        if math.hypot(*self.ball_center) + self.ball_radius >= 1.0:
            raise ValueError("ball must lie inside the unit disk")
        if self.convention not in ("plain", "operator"):
            raise ValueError("convention must be 'plain' or 'operator'")
        if self.solver not in ("cholesky", "cg"):
            raise ValueError("solver must be 'cholesky' or 'cg'")
        self.quad()

    def quad(self):
        return QuadConfig(far_degree=self.far_degree, touching_points=self.touching_points,
                          far_ratio=self.far_ratio, mid_ratio=self.mid_ratio,
                          near_max_depth=self.near_max_depth, near_degree=self.near_degree,
                          tail_degree=self.tail_degree, vertex_points=self.vertex_points,
                          wide_degree=self.wide_degree, wide_ratio=self.wide_ratio)

    @property
    def preset_info(self):
        return PRESETS[self.preset]


# ---------------------------------------------------------------------------
# flat key = value config files
# ---------------------------------------------------------------------------

_TUPLE_KEYS = {"s_values", "levels", "ball_center"}


def _coerce(name, raw):
    f = {x.name: x for x in dataclasses.fields(StudyConfig)}[name]
    default = f.default
    raw = raw.strip()
    if name in _TUPLE_KEYS:
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float("nan") if raw.lower() in ("auto", "nan", "") else float(raw)
    return raw


def parse_config_text(text):
    known = {x.name for x in dataclasses.fields(StudyConfig)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, val)
    return out


def load_config(path, overrides=None):
    with open(path) as fh:
        values = parse_config_text(fh.read())
    values.update(overrides or {})
    return StudyConfig(**values)


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    if isinstance(v, float):
        return "auto" if math.isnan(v) else repr(v)
    return str(v)


def format_config(cfg):
    lines = [f"{f.name} = {_fmt_value(getattr(cfg, f.name))}" for f in dataclasses.fields(cfg)]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# CSV / SVG
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def emit_csv(records, path):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in records:
                w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc}") from exc
    return path


def read_csv(path):
    recs = []
    with open(path, newline="") as fh:
        rows = csv.DictReader(fh)
        if tuple(rows.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {rows.fieldnames}")
        for row in rows:
            recs.append(StudyRecord(
                study=row["study"], preset=row["preset"], s=float(row["s"]), mu=float(row["mu"]),
                level=int(row["level"]), h=float(row["h"]), N=int(row["N"]),
                err_l2=float(row["err_l2"]), err_energy=float(row["err_energy"]),
                err_local_hs=float(row["err_local_hs"]), convention=row["convention"],
                quad_order=row["quad_order"]))
    return recs


_MARKERS = ("circle", "square", "triangle", "diamond", "cross", "star")
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _marker(kind, x, y, color, r=4.0):
    if kind == "circle":
        return f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{color}"/>'
    if kind == "square":
        return f'<rect x="{x - r:.2f}" y="{y - r:.2f}" width="{2 * r}" height="{2 * r}" fill="{color}"/>'
    if kind == "triangle":
        pts = f"{x:.2f},{y - r:.2f} {x - r:.2f},{y + r:.2f} {x + r:.2f},{y + r:.2f}"
        return f'<polygon points="{pts}" fill="{color}"/>'
    if kind == "diamond":
        pts = f"{x:.2f},{y - r:.2f} {x + r:.2f},{y:.2f} {x:.2f},{y + r:.2f} {x - r:.2f},{y:.2f}"
        return f'<polygon points="{pts}" fill="{color}"/>'
    if kind == "cross":
        return (f'<path d="M{x - r:.2f},{y - r:.2f} L{x + r:.2f},{y + r:.2f} M{x - r:.2f},{y + r:.2f} '
                f'L{x + r:.2f},{y - r:.2f}" stroke="{color}" class="marker"/>')
    return f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r + 1}" fill="none" stroke="{color}"/>'


def emit_svg(records, theory_exponent, path, field="err_l2", title=""):
    """Log-log error-vs-N plot; one polyline per s plus a dashed theory line
    through the last point of each series."""
    recs = [r for r in records if np.isfinite(getattr(r, field)) and getattr(r, field) > 0]
    if len(recs) < 2:
        raise ValueError("need at least two records to plot")
    series = {}
    for r in sorted(recs, key=lambda r: (r.s, r.N)):
        series.setdefault(r.s, []).append(r)
    lx = np.log10([r.N for r in recs])
    ly = np.log10([getattr(r, field) for r in recs])
    W, H, m = 640, 480, 60
    x0, x1 = lx.min() - 0.1, lx.max() + 0.1
    y0, y1 = ly.min() - 0.2, ly.max() + 0.2

    def px(v):
        return m + (v - x0) / (x1 - x0) * (W - 2 * m)

    def py(v):
        return H - m - (v - y0) / (y1 - y0) * (H - 2 * m)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">'
           f'{title or field}</text>',
           f'<line x1="{m}" y1="{H - m}" x2="{W - m}" y2="{H - m}" stroke="black"/>',
           f'<line x1="{m}" y1="{m}" x2="{m}" y2="{H - m}" stroke="black"/>']
    for d in range(math.ceil(x0), math.floor(x1) + 1):
        out.append(f'<text x="{px(d):.2f}" y="{H - m + 18}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">1e{d}</text>')
    for d in range(math.ceil(y0), math.floor(y1) + 1):
        out.append(f'<text x="{m - 6}" y="{py(d):.2f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">1e{d}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 16}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="12">N</text>')
    legend = []
    for k, (s, rs) in enumerate(series.items()):
        color = _COLORS[k % len(_COLORS)]
        marker = _MARKERS[k % len(_MARKERS)]
        xs = [px(math.log10(r.N)) for r in rs]
        ys = [py(math.log10(getattr(r, field))) for r in rs]
        pts = " ".join(f"{x:.3f},{y:.3f}" for x, y in zip(xs, ys))
        out.append(f'<polyline class="data" data-s="{s:g}" points="{pts}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        out.extend(_marker(marker, x, y, color) for x, y in zip(xs, ys))
        expo = theory_exponent(s) if callable(theory_exponent) else theory_exponent
        if expo is not None and len(rs) >= 1:
            last = rs[-1]
            la, lb = math.log10(rs[0].N), math.log10(last.N)
            ya = math.log10(getattr(last, field)) + expo * (la - lb)
            out.append(f'<path class="reference" data-s="{s:g}" d="M{px(la):.3f},{py(ya):.3f} '
                       f'L{px(lb):.3f},{py(math.log10(getattr(last, field))):.3f}" stroke="{color}" '
                       f'stroke-dasharray="6,4" fill="none"/>')
        legend.append((s, color, marker))
    out.append('<g class="legend">')
    for k, (s, color, marker) in enumerate(legend):
        y = m + 10 + 18 * k
        out.append(_marker(marker, W - m - 70, y, color))
        out.append(f'<text x="{W - m - 60}" y="{y + 4}" font-family="sans-serif" font-size="12">'
                   f's = {s:g}</text>')
    out.append("</g>")
    out.append("</svg>")
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(out) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write SVG {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------


@dataclass
class RateSummary:
    s: float
    field: str
    slope: float
    stderr: float
    n_used: int
    dropped: tuple
    theory: float = float("nan")
    tolerance: float = float("nan")

    @property
    def passed(self):
        if math.isnan(self.theory):
            return None
        return abs(self.slope - self.theory) <= self.tolerance


@dataclass
class StudyResult:
    config: StudyConfig
    records: list
    rates: list
    complete: bool = True
    failures: list = field(default_factory=list)
    paths: dict = field(default_factory=dict)

    def rate(self, s, field):
        for r in self.rates:
            if r.s == s and r.field == field:
                return r
        return None

    def interior_checks(self):
        """(s, local slope, global energy exponent, passed) for local-error presets."""
        p = self.config.preset_info
        if p.field != "err_local_hs" or math.isnan(p.global_energy):
            return []
        out = []
        for s in self.config.s_values:
            r = self.rate(s, "err_local_hs")
            if r is not None:
                out.append((s, r.slope, p.global_energy,
                            r.slope <= p.global_energy - INTERIOR_MARGIN))
        return out

    @property
    def passed(self):
        flags = [r.passed for r in self.rates if r.passed is not None]
        flags += [c[3] for c in self.interior_checks()]
        return self.complete and all(flags)


def solve_level(cfg, s, level, h, quad=None):
    """Mesh, assemble, solve and measure one (s, h) point; returns a StudyRecord."""
    quad = quad or cfg.quad()
    t0 = time.perf_counter()
    # a vertex ring on the measurement circle keeps the whole-element ball stable across levels
    anchors = (cfg.ball_radius,) if cfg.ball_center == (0.0, 0.0) else ()
    mesh = build_disk_mesh(GradedFamilyConfig(mu=cfg.mu, h=h, anchor_radii=anchors))
    R = default_R_aux(mesh) if math.isnan(cfg.R_aux) else cfg.R_aux
    band = build_aux_band(mesh, R)
    params = KernelParams(s)
    system = assemble_stiffness(mesh, band, params, quad, mu=cfg.mu)
    t1 = time.perf_counter()
    U = solve_cholesky(system) if cfg.solver == "cholesky" else solve_cg(system, tol=1e-12)
    t2 = time.perf_counter()
    u = GetoorSolution(s)
    err_l2 = l2_error(mesh, U, u)
    err_energy = energy_error(system, U, s)
    D = ball_submesh(mesh, cfg.ball_center, cfg.ball_radius)
    if D:
        gram = assemble_subdomain_gram(mesh, D, params, quad)
        e = nodal_interpolant(mesh, u).coeffs - U.coeffs
        err_local = local_hs_error(gram, e[gram.dofs])
        if cfg.convention == "operator":
            err_local *= math.sqrt(0.5 * params.c_ds)
    else:
        err_local = float("nan")
    FU = float(system.F @ U.coeffs)
    UAU = float(U.coeffs @ system.A @ U.coeffs)
    dv = mesh.dof_vertices
    i0 = int(np.argmin(np.hypot(*mesh.vertices[dv].T)))
    meta = dict(n_triangles=mesh.n_triangles, n_band=len(band.triangles), R_aux=R,
                t_assemble=t1 - t0, t_solve=t2 - t1, t_total=time.perf_counter() - t0,
                galerkin_gap=abs(UAU - FU) / abs(FU), u_origin=float(U.coeffs[i0]),
                origin_dist=float(np.hypot(*mesh.vertices[dv[i0]])), n_ball=len(D))
    return StudyRecord(cfg.study, cfg.preset, s, cfg.mu, level, h, mesh.n_dofs, err_l2,
                       err_energy, err_local, cfg.convention, quad.label(), meta)


def _rates(cfg, records):
    p = cfg.preset_info
    out = []
    for s in cfg.s_values:
        rs = [r for r in records if r.s == s]
        for f in FIELDS:
            vals = [getattr(r, f) for r in rs]
            if len(rs) < 3 or not all(np.isfinite(vals)) or min(vals) <= 0:
                continue
            fit = fit_rate(rs, f)
            theory, tol = float("nan"), float("nan")
            if f == p.field and p.theory is not None:
                theory, tol = p.theory(s), p.tolerance
            out.append(RateSummary(s, f, fit.slope, fit.stderr, fit.n_used, fit.dropped, theory, tol))
    return out


def write_rates(rates, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("s", "field", "slope", "stderr", "n_used", "dropped_levels", "theory",
                    "tolerance", "passed"))
        for r in rates:
            w.writerow((_fmt(r.s), r.field, _fmt(r.slope), _fmt(r.stderr), r.n_used,
                        " ".join(map(str, r.dropped)), _fmt(r.theory), _fmt(r.tolerance),
                        "" if r.passed is None else str(r.passed)))


def summarize(cfg, records, failures=()):
    """Rates and verdicts of ``cfg``'s preset for records (possibly from a shared run)."""
    keep = set(cfg.s_values)
    recs = [r for r in records if r.s in keep and r.h in cfg.levels]
    failures = list(failures)
    return StudyResult(cfg, recs, _rates(cfg, recs), complete=not failures, failures=failures)


def run_study(cfg, progress=None):
    """Run every (s, level) of ``cfg``; a failed level aborts the finer levels of that s."""
    threads = 1 if cfg.deterministic else cfg.threads
    if threads and threads > 0:
        try:
            import numba
            numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
        except ImportError:  # pragma: no cover
            pass
    os.makedirs(cfg.out, exist_ok=True)
    records, failures = [], []
    quad = cfg.quad()
    for s in cfg.s_values:
        for level, h in enumerate(cfg.levels):
            try:
                rec = solve_level(cfg, s, level, h, quad)
            except (AssemblyError, SolverError, MeshError, np.linalg.LinAlgError, MemoryError) as exc:
                log.error("s=%g level %d (h=%g) aborted: %s", s, level, h, exc)
                failures.append((s, level, h, str(exc)))
                break
            records.append(rec)
            if progress:
                progress(rec)
    res = summarize(cfg, records, failures)
    base = os.path.join(cfg.out, cfg.study)
    res.paths["csv"] = emit_csv(records, base + ".csv")
    res.paths["rates"] = base + "_rates.csv"
    write_rates(res.rates, res.paths["rates"])
    with open(base + ".resolved.cfg", "w") as fh:
        fh.write(format_config(cfg))
    res.paths["config"] = base + ".resolved.cfg"
    p = cfg.preset_info
    if len(records) >= 2:
        res.paths["svg"] = emit_svg(records, p.theory, base + ".svg", p.field,
                                    title=f"{cfg.study}: {p.field} vs N")
    return res
