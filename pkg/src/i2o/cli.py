"""Command-line harness: deterministic experiments, CSV export, SVG plots.

Usage: ``i2o <command> --config <path> [--out DIR --seeds A..B ...]``.
Flags override config-file values; config files are ``key = value`` lines
with ``#`` comments.  Identical configs produce byte-identical CSV, and
plots are regenerated from the CSV alone.  The env var I2O_THREADS caps the
worker pool for seed-level fan-out (output bytes never depend on it).

Exit codes: 0 success, 1 invalid config or malformed input, 2 invariant
violation detected in a report.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metalin, outer, serialize, theory
from .inner import InvalidProblemError, closed_form_state, validate
from .linops import SeededSource
from .theory import BoundViolationError

SWEEP_HEADER = "seed,n,delta_n,loss_n,loss_n_dn,d_gap,lower_bound"
AVGCASE_HEADER = "seed,d_theta,n,neg_lower_bound,rhs_neg_bound"
IFT_HEADER = "seed,n,loss_closed_form,loss_unrolled,loss_ift,res_unrolled,res_ift"

THEOREM2_LOSS_TOL = 1e-7
THEOREM2_RESIDUAL_TOL = 1e-6


class ConfigError(ValueError):
    """Invalid configuration file or flag values."""


class CsvFormatError(ValueError):
    """Malformed CSV input; carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def fmt(x: float) -> str:
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return f"{float(x):.17g}"


# --- configuration ----------------------------------------------------------

def load_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{i}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def parse_seeds(text: str) -> list[int]:
    text = text.strip()
    try:
        if ".." in text:
            lo, _, hi = text.partition("..")
            seeds = list(range(int(lo), int(hi) + 1))
        else:
            seeds = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse seeds {text!r}: use 'A..B' or 'a,b,c'") from exc
    if not seeds:
        raise ConfigError("seed list is empty")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")
    return seeds


def parse_int_list(text: str, what: str) -> list[int]:
    try:
        vals = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what} {text!r}") from exc
    if not vals:
        raise ConfigError(f"{what} is empty")
    return vals


@dataclass
class ExperimentConfig:
    """A command plus its merged (flags-over-file-over-defaults) options."""

    command: str
    options: dict[str, str] = field(default_factory=dict)

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.options.get(key, default)

    def get_int(self, key: str, default: int) -> int:
        raw = self.options.get(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"option {key} must be an integer, got {raw!r}") from exc

    def get_float(self, key: str, default: float | None) -> float | None:
        raw = self.options.get(key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"option {key} must be a number, got {raw!r}") from exc

    def get_bool(self, key: str, default: bool = False) -> bool:
        raw = self.options.get(key)
        if raw is None:
            return default
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"option {key} must be a boolean, got {raw!r}")

    def seeds(self, default: str) -> list[int]:
        single = self.options.get("seed")
        if single is not None and "seeds" not in self.options:
            return [int(single)]
        return parse_seeds(self.options.get("seeds", default))

    def out_dir(self) -> Path:
        out = Path(self.options.get("out", "i2o-out"))
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {out} is not writable")
        return out

    def delta_grid(self, n: int) -> list[int]:
        explicit = self.options.get("delta_grid")
        if explicit is not None:
            grid = parse_int_list(explicit, "delta_grid")
        elif "delta_min" in self.options or "delta_max" in self.options:
            lo = self.get_int("delta_min", -(n - 1))
            hi = self.get_int("delta_max", 10 * n)
            step = self.get_int("delta_step", 1)
            if step < 1:
                raise ConfigError("delta_step must be >= 1")
            grid = list(range(lo, hi + 1, step))
        else:
            grid = theory.default_delta_grid(n)
        if not grid:
            raise ConfigError("delta grid is empty")
        if any(dn <= -n for dn in grid):
            raise ConfigError(f"delta grid contains values <= -n = {-n}")
        return grid


_COMMANDS = ("validate", "sweep", "lowerbound-scan", "avgcase",
             "nonconvex-scan", "ift-vs-unroll", "imaml-demo", "plot")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="i2o",
        description="Inner-iterations-overfitting experiments with deterministic CSV export",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="key = value config file")
        cmd.add_argument("--out", help="output directory (default i2o-out)")
        cmd.add_argument("--seed", type=int, help="single seed")
        cmd.add_argument("--seeds", help="'A..B' inclusive range or comma list")
        cmd.add_argument("--eta", type=float, help="inner step size override")
        cmd.add_argument("--plot", action="store_true", default=None,
                         help="also render the SVG plot")
        cmd.add_argument("--n", type=int, help="inner iteration count")
        cmd.add_argument("--d-x", dest="d_x", type=int)
        cmd.add_argument("--d-z", dest="d_z", type=int)
        cmd.add_argument("--d-theta", dest="d_theta", type=int)
        cmd.add_argument("--d-theta-grid", dest="d_theta_grid", help="comma list")
        cmd.add_argument("--n-grid", dest="n_grid", help="comma list")
        cmd.add_argument("--delta-min", dest="delta_min", type=int)
        cmd.add_argument("--delta-max", dest="delta_max", type=int)
        cmd.add_argument("--delta-step", dest="delta_step", type=int)
        cmd.add_argument("--delta-grid", dest="delta_grid", help="comma list")
        cmd.add_argument("--trainer", choices=("closed_form", "unrolled_gd", "ift_gd"))
        cmd.add_argument("--instances", type=int, help="number of random instances")
        cmd.add_argument("--max-dim", dest="max_dim", type=int)
        cmd.add_argument("--inner-rank", dest="inner_rank", type=int)
        cmd.add_argument("--outer-rank", dest="outer_rank", type=int)
        cmd.add_argument("--problem", help="problem fixture path")
        cmd.add_argument("--outer", dest="outer_loss", help="outer-loss fixture path")
        cmd.add_argument("--tasks", help="task fixture path")
        cmd.add_argument("--n-tasks", dest="n_tasks", type=int)
        cmd.add_argument("--task-dim", dest="task_dim", type=int)
        cmd.add_argument("--m-train", dest="m_train", type=int)
        cmd.add_argument("--m-val", dest="m_val", type=int)
        cmd.add_argument("--lam", type=float)
        cmd.add_argument("--conflicting", action="store_true", default=None)
        cmd.add_argument("--csv", help="CSV path (plot command)")
        cmd.add_argument("--kind", choices=("sweep", "avgcase", "nonconvex"),
                         help="plot kind")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    options: dict[str, str] = {}
    if args.config:
        options.update(load_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        options[key] = str(value)
    return ExperimentConfig(command=args.command, options=options)


# --- CSV --------------------------------------------------------------------

def write_csv(path: Path, header: str, rows: list[list]) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(str(x) if isinstance(x, (int, str)) else fmt(x)
                              for x in row))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path, expected_header: str) -> list[dict[str, float]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CsvFormatError(0, f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise CsvFormatError(0, "empty file")
    if lines[0] != expected_header:
        raise CsvFormatError(1, f"expected header {expected_header!r}, got {lines[0]!r}")
    names = expected_header.split(",")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(names):
            raise CsvFormatError(i, f"expected {len(names)} fields, got {len(parts)}")
        row = {}
        for name, part in zip(names, parts):
            try:
                row[name] = float(part)
            except ValueError as exc:
                raise CsvFormatError(i, f"bad number {part!r} in column {name}") from exc
        rows.append(row)
    return rows


def sweep_rows_to_csv(reports: Sequence[theory.I2OReport]) -> list[list]:
    rows = []
    for report in reports:
        for r in report.rows:
            dn = "inf" if (isinstance(r.delta_n, float) and math.isinf(r.delta_n)) else int(r.delta_n)
            rows.append([r.seed, r.n, dn, r.loss_n, r.loss_n_dn, r.d_gap, r.lower_bound])
    return rows


# --- SVG --------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _svg_escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_series_svg(series: list[tuple[str, list[tuple[float, float]]]],
                      xlabel: str, ylabel: str, title: str,
                      vline_x: float | None = None) -> str:
    """Self-contained SVG line chart: axes, ticks, legend, one polyline per series."""
    if not series or all(len(pts) == 0 for _, pts in series):
        raise ValueError("nothing to plot")
    width, height = 640.0, 440.0
    left, right, top, bottom = 70.0, 20.0, 40.0, 50.0
    xs = [x for _, pts in series for x, _ in pts]
    ys = [y for _, pts in series for _, y in pts]
    if vline_x is not None:
        xs.append(vline_x)
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def sx(x: float) -> float:
        return left + (x - x_lo) / (x_hi - x_lo) * (width - left - right)

    def sy(y: float) -> float:
        return height - bottom - (y - y_lo) / (y_hi - y_lo) * (height - top - bottom)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{_svg_escape(title)}</text>',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" '
        f'y2="{height - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
        f'<text x="{(left + width - right) / 2:.1f}" y="{height - 12:.1f}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="12">'
        f'{_svg_escape(xlabel)}</text>',
        f'<text x="16" y="{(top + height - bottom) / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {(top + height - bottom) / 2:.1f})">'
        f'{_svg_escape(ylabel)}</text>',
    ]
    for i in range(5):
        xv = x_lo + i * (x_hi - x_lo) / 4
        yv = y_lo + i * (y_hi - y_lo) / 4
        parts.append(f'<line x1="{sx(xv):.1f}" y1="{height - bottom:.1f}" '
                     f'x2="{sx(xv):.1f}" y2="{height - bottom + 5:.1f}" stroke="black"/>')
        parts.append(f'<text x="{sx(xv):.1f}" y="{height - bottom + 18:.1f}" '
                     f'text-anchor="middle" font-family="sans-serif" font-size="10">'
                     f'{xv:.4g}</text>')
        parts.append(f'<line x1="{left - 5:.1f}" y1="{sy(yv):.1f}" '
                     f'x2="{left:.1f}" y2="{sy(yv):.1f}" stroke="black"/>')
        parts.append(f'<text x="{left - 8:.1f}" y="{sy(yv) + 3:.1f}" '
                     f'text-anchor="end" font-family="sans-serif" font-size="10">'
                     f'{yv:.4g}</text>')
    if vline_x is not None:
        parts.append(f'<line x1="{sx(vline_x):.1f}" y1="{top:.1f}" '
                     f'x2="{sx(vline_x):.1f}" y2="{height - bottom:.1f}" '
                     f'stroke="black" stroke-dasharray="6,4"/>')
    for i, (label, pts) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in sorted(pts))
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{width - right - 6:.1f}" y="{top + 14 * (i + 1):.1f}" '
                     f'text-anchor="end" font-family="sans-serif" font-size="10" '
                     f'fill="{color}">{_svg_escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plot(csv_path, kind: str, out_path) -> Path:
    """Render the SVG for a CSV produced by run(); raises before writing on bad input."""
    csv_path = Path(csv_path)
    out_path = Path(out_path)
    if kind == "sweep":
        rows = read_csv(csv_path, SWEEP_HEADER)
        if not rows:
            raise CsvFormatError(1, "no data rows to plot")
        groups: dict[int, list[tuple[float, float]]] = {}
        for r in rows:
            if math.isinf(r["delta_n"]):
                continue
            groups.setdefault(int(r["seed"]), []).append((r["delta_n"], r["loss_n_dn"]))
        series = [(f"seed {s}", pts) for s, pts in sorted(groups.items())]
        svg = render_series_svg(series, xlabel="delta_n",
                                ylabel="training loss at N + delta_n",
                                title="loss vs. extra inner iterations",
                                vline_x=0.0)
    elif kind in ("avgcase", "nonconvex"):
        rows = read_csv(csv_path, AVGCASE_HEADER)
        if not rows:
            raise CsvFormatError(1, "no data rows to plot")
        acc: dict[tuple[int, int], list[float]] = {}
        for r in rows:
            acc.setdefault((int(r["n"]), int(r["d_theta"])), []).append(r["neg_lower_bound"])
        by_n: dict[int, list[tuple[float, float]]] = {}
        for (n, dt), vals in sorted(acc.items()):
            by_n.setdefault(n, []).append((float(dt), math.log10(max(np.mean(vals), 1e-16))))
        series = [(f"N = {n}", pts) for n, pts in sorted(by_n.items())]
        svg = render_series_svg(series, xlabel="d_theta",
                                ylabel="log10(mean bound magnitude)",
                                title="negative lower bound vs. outer dimension")
    else:
        raise ConfigError(f"unknown plot kind {kind!r}")
    out_path.write_text(svg)
    return out_path


# --- commands ----------------------------------------------------------------

def _cmd_validate(cfg: ExperimentConfig) -> int:
    path = cfg.get("problem")
    if path is None:
        raise ConfigError("validate needs --problem <fixture path>")
    try:
        with open(path) as f:
            p = serialize.load_problem(f)
    except OSError as exc:
        raise ConfigError(f"cannot read problem fixture {path}: {exc}") from exc
    diag = validate(p)
    print(f"k_in rank: {diag.k_in_rank} (d_x = {p.d_x})")
    print(f"surjective: {diag.surjective}")
    print(f"spectral radius of b k_in^T: {diag.spectrum.spectral_radius:.6g}")
    print(f"min real part: {diag.spectrum.min_real_part:.6g}")
    print(f"positive spectrum: {diag.positive_spectrum}")
    for msg in diag.messages:
        print(f"violation: {msg}")
    print("PASS" if diag.ok else "FAIL")
    return 0 if diag.ok else 2


def _load_fixture_pair(cfg: ExperimentConfig):
    p_path, l_path = cfg.get("problem"), cfg.get("outer_loss")
    if p_path is None:
        return None
    if l_path is None:
        raise ConfigError("--problem also needs --outer <outer-loss fixture>")
    with open(p_path) as f:
        p = serialize.load_problem(f)
    with open(l_path) as f:
        l = serialize.load_outer_loss(f)
    return p, l


def _cmd_sweep(cfg: ExperimentConfig) -> int:
    out = cfg.out_dir()
    n = cfg.get_int("n", 20)
    trainer = cfg.get("trainer", "closed_form")
    delta_grid = cfg.delta_grid(n)
    reports = []
    fixture = _load_fixture_pair(cfg)
    if fixture is not None:
        p, l = fixture
        eta = cfg.get_float("eta", None)
        if eta is None:
            eta = theory.default_step_size(p)
        z0 = np.zeros(p.d_z)
        reports.append(theory.sweep(p, l, eta, z0, n, delta_grid, trainer=trainer))
    else:
        d_z = cfg.get_int("d_z", 5)
        d_x = cfg.get_int("d_x", 4)
        d_theta = cfg.get_int("d_theta", 4)
        outer_rank = cfg.get_int("outer_rank", max(d_z - 2, 1))
        seeds = cfg.seeds("0..19")

        def one(seed: int) -> theory.I2OReport:
            p, l, z0 = theory.surjective_instance(
                SeededSource(seed), d_z=d_z, d_x=d_x, d_theta=d_theta,
                outer_rank=outer_rank)
            eta = cfg.get_float("eta", None)
            if eta is None:
                eta = theory.default_step_size(p)
            return theory.sweep(p, l, eta, z0, n, delta_grid, trainer=trainer,
                                seed=seed)

        reports = theory._map_over_seeds(one, seeds)
    csv_path = out / "sweep.csv"
    write_csv(csv_path, SWEEP_HEADER, sweep_rows_to_csv(reports))
    print(f"wrote {csv_path}")
    if cfg.get_bool("plot"):
        print(f"wrote {plot(csv_path, 'sweep', out / 'sweep.svg')}")
    return 0


def _cmd_lowerbound_scan(cfg: ExperimentConfig) -> int:
    out = cfg.out_dir()
    instances = cfg.get_int("instances", 50)
    max_dim = cfg.get_int("max_dim", 12)
    seeds = cfg.seeds(f"0..{instances - 1}")

    def one(seed: int) -> theory.I2OReport:
        src = SeededSource(seed)
        p, l, z0, eta = theory.random_valid_instance(src, max_dim=max_dim)
        n = 5 + int(src.child(20).uniforms(1)[0] * 36) % 36
        grid = list(range(-n + 1, 5 * n + 1))
        return theory.sweep(p, l, eta, z0, n, grid, trainer="closed_form", seed=seed)

    reports = theory._map_over_seeds(one, seeds)
    csv_path = out / "lowerbound-scan.csv"
    write_csv(csv_path, SWEEP_HEADER, sweep_rows_to_csv(reports))
    print(f"wrote {csv_path}")
    if cfg.get_bool("plot"):
        print(f"wrote {plot(csv_path, 'sweep', out / 'lowerbound-scan.svg')}")
    return 0


def _avgcase_csv_rows(report: theory.AvgCaseReport) -> list[list]:
    rows = []
    for s in report.samples:
        rhs = "nan" if math.isnan(s.rhs_magnitude) else fmt(s.rhs_magnitude)
        rows.append([s.seed, s.d_theta, s.n, fmt(s.magnitude), rhs])
    return rows


def _cmd_avgcase(cfg: ExperimentConfig) -> int:
    out = cfg.out_dir()
    dims = cfg.get_int("d_z", 20)
    d_theta_grid = parse_int_list(cfg.get("d_theta_grid", "2,5,10,15,20"), "d_theta_grid")
    n_grid = parse_int_list(cfg.get("n_grid", "10,50,100,200"), "n_grid")
    seeds = cfg.seeds("0..19")
    report = theory.monte_carlo_avg_case(dims, d_theta_grid, n_grid, seeds)
    csv_path = out / "avgcase.csv"
    write_csv(csv_path, AVGCASE_HEADER, _avgcase_csv_rows(report))
    print(f"wrote {csv_path}")
    for dt, mean in report.mean_magnitude_by_dtheta().items():
        print(f"d_theta={dt}: mean bound magnitude {mean:.6e}")
    if cfg.get_bool("plot"):
        print(f"wrote {plot(csv_path, 'avgcase', out / 'avgcase.svg')}")
    return 0


def _cmd_nonconvex_scan(cfg: ExperimentConfig) -> int:
    out = cfg.out_dir()
    dims = cfg.get_int("d_z", 10)
    d_theta_grid = parse_int_list(
        cfg.get("d_theta_grid", ",".join(str(d) for d in range(2, 11))), "d_theta_grid")
    n_grid = parse_int_list(cfg.get("n_grid", "100"), "n_grid")
    seeds = cfg.seeds("0..19")
    inner_rank = cfg.get_int("inner_rank", dims // 2)
    outer_rank = cfg.get_int("outer_rank", dims // 2)
    report = theory.non_strongly_convex_scan(
        dims, d_theta_grid, seeds, n_grid=n_grid,
        inner_rank=inner_rank, outer_rank=outer_rank)
    csv_path = out / "nonconvex-scan.csv"
    write_csv(csv_path, AVGCASE_HEADER, _avgcase_csv_rows(report))
    print(f"wrote {csv_path}")
    if cfg.get_bool("plot"):
        print(f"wrote {plot(csv_path, 'nonconvex', out / 'nonconvex-scan.svg')}")
    return 0


def _cmd_ift_vs_unroll(cfg: ExperimentConfig) -> int:
    out = cfg.out_dir()
    seeds = cfg.seeds("0..19")
    n_override = cfg.get("n")
    rows: list[list] = []
    worst = 0.0
    for seed in seeds:
        src = SeededSource(seed)
        p, l, z0 = theory.trainer_equivalence_instance(src)
        eta = theory.default_step_size(p)
        n = int(n_override) if n_override is not None else 40
        closed = outer.train_closed_form(p, l, eta, z0, n)
        unrolled = outer.train_unrolled_gd(p, l, eta, z0, n, outer_steps=300000)
        ift = outer.train_ift(p, l, eta, z0, n, outer_steps=300000)
        loss_c = outer.loss_at(p, l, eta, z0, closed.theta, n)
        loss_u = outer.loss_at(p, l, eta, z0, unrolled.theta, n)
        loss_i = outer.loss_at(p, l, eta, z0, ift.theta, n)
        proc = closed_form_state(p, eta, z0, n)
        res_u = outer.characterization_residual(proc, l, unrolled.theta)
        res_i = outer.characterization_residual(proc, l, ift.theta)
        rows.append([seed, n, fmt(loss_c), fmt(loss_u), fmt(loss_i),
                     fmt(res_u), fmt(res_i)])
        gap = abs(loss_i - loss_u)
        worst = max(worst, gap / (1.0 + loss_u))
        if gap > THEOREM2_LOSS_TOL * (1.0 + loss_u) or max(res_u, res_i) > THEOREM2_RESIDUAL_TOL:
            raise BoundViolationError(
                f"seed {seed}: trainer equivalence violated "
                f"(loss gap {gap:.3e}, residuals {res_u:.3e}/{res_i:.3e})"
            )
    csv_path = out / "ift-vs-unroll.csv"
    write_csv(csv_path, IFT_HEADER, rows)
    print(f"wrote {csv_path}")
    print(f"worst relative loss gap: {worst:.3e}")
    return 0


def _make_tasks(cfg: ExperimentConfig, seeds_src: SeededSource) -> list[metalin.LinearTask]:
    path = cfg.get("tasks")
    if path is not None:
        with open(path) as f:
            return serialize.load_tasks(f)
    n_tasks = cfg.get_int("n_tasks", 2)
    d = cfg.get_int("task_dim", 3)
    m_train = cfg.get_int("m_train", 6)
    m_val = cfg.get_int("m_val", 4)
    conflicting = cfg.get_bool("conflicting")
    tasks = []
    for i in range(n_tasks):
        child = seeds_src.child(i if not conflicting else i // 2)
        x_train = theory.gaussian_matrix(child.child(0), m_train, d)
        x_val = theory.gaussian_matrix(child.child(1), m_val, d)
        w = theory.gaussian_vector(child.child(2), d)
        sign = -1.0 if (conflicting and i % 2 == 1) else 1.0
        tasks.append(metalin.LinearTask(
            x_train=x_train, y_train=sign * (x_train @ w),
            x_val=x_val, y_val=sign * (x_val @ w)))
    return tasks


def _cmd_imaml_demo(cfg: ExperimentConfig) -> int:
    out = cfg.out_dir()
    seeds = cfg.seeds("0")
    n = cfg.get_int("n", 50)
    lam = cfg.get_float("lam", 0.5)
    reports = []
    for seed in seeds:
        tasks = _make_tasks(cfg, SeededSource(seed))
        meta_cfg = metalin.MetaConfig(lam=lam, tasks=tuple(tasks))
        grid = cfg.delta_grid(n)
        reports.append(metalin.meta_sweep(meta_cfg, cfg.get_float("eta", None),
                                          n, grid, seed=seed))
    csv_path = out / "imaml-demo.csv"
    write_csv(csv_path, SWEEP_HEADER, sweep_rows_to_csv(reports))
    print(f"wrote {csv_path}")
    if cfg.get_bool("plot"):
        print(f"wrote {plot(csv_path, 'sweep', out / 'imaml-demo.svg')}")
    return 0


def _cmd_plot(cfg: ExperimentConfig) -> int:
    csv_path = cfg.get("csv")
    kind = cfg.get("kind")
    if csv_path is None or kind is None:
        raise ConfigError("plot needs --csv <path> and --kind <sweep|avgcase|nonconvex>")
    out = cfg.out_dir()
    target = out / (Path(csv_path).stem + ".svg")
    print(f"wrote {plot(csv_path, kind, target)}")
    return 0


_RUNNERS = {
    "validate": _cmd_validate,
    "sweep": _cmd_sweep,
    "lowerbound-scan": _cmd_lowerbound_scan,
    "avgcase": _cmd_avgcase,
    "nonconvex-scan": _cmd_nonconvex_scan,
    "ift-vs-unroll": _cmd_ift_vs_unroll,
    "imaml-demo": _cmd_imaml_demo,
    "plot": _cmd_plot,
}


def run(cfg: ExperimentConfig) -> int:
    """Execute one command; returns the exit status."""
    return _RUNNERS[cfg.command](cfg)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        return run(cfg)
    except (ConfigError, CsvFormatError, serialize.FixtureFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (BoundViolationError, InvalidProblemError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
