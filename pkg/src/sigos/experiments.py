"""Orchestration: field norms, fits, the equidistribution demonstration and config runs."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import examples as ex_mod
from .errors import AcceptanceFailure, ParameterError
from .fits import PowerLawFit, power_law_fit
from .geometry import Subspace
from .oscillatory import Field, PhaseFamily, SampledFunction, bump, extension, grid_axis
from .wavepackets import CAP_SPACING, DEFAULT_DELTA, DEFAULT_DELTA_M, tangency_filter

__all__ = [
    "PowerLawFit", "power_law_fit", "lp_norm", "EquidistributionReport", "equidistribution_demo",
    "ExperimentConfig", "ScanSpec", "ArtifactBundle", "load_config", "run_experiment",
    "write_csv", "line_chart_svg", "shipped_config",
]

REGION_TOL = 1e-9
EQ_FORMS = {"elliptic": np.eye(2), "hyperbolic": np.array([[0.0, 1.0], [1.0, 0.0]])}
EQ_LINE_AXIS = {"elliptic": 1, "hyperbolic": 0}  # the coordinate that varies along A
EQ_X1_STEP = 0.25
EQ_X3_SLICES = 17
DEFAULT_RHOS = (1.0, 4.0, 16.0, 64.0, 256.0)


# ---------------------------------------------------------------- norms

def _axis_weights(axis: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Trapezoid weights of the nodes of `axis` lying in [lo, hi]."""
    inside = (axis >= lo - REGION_TOL) & (axis <= hi + REGION_TOL)
    w = np.zeros(len(axis))
    idx = np.flatnonzero(inside)
    if len(idx) == 0:
        return w
    if len(axis) == 1 or len(idx) == 1:
        w[idx] = 1.0 if len(axis) == 1 else float(axis[1] - axis[0])
        return w
    step = float(axis[1] - axis[0])
    w[idx] = step
    w[idx[0]] = w[idx[-1]] = step / 2
    return w


def lp_norm(fld: Field, p, region=None) -> float:
    """Trapezoidal L^p norm of the field over the box `region` (default: the whole grid).

    p = inf returns the largest modulus on the grid nodes in the region.
    """
    p = float(p)
    if not p >= 1:
        raise ParameterError(f"p must lie in [1, inf], got {p}")
    full = fld.region
    region = full if region is None else [tuple(map(float, r)) for r in region]
    if len(region) != len(full):
        raise ParameterError(f"region has {len(region)} axes, field has {len(full)}")
    for i, ((lo, hi), (a, b)) in enumerate(zip(region, full)):
        if lo > hi or lo < a - REGION_TOL or hi > b + REGION_TOL:
            raise ParameterError(f"region axis {i} [{lo}, {hi}] escapes the field range [{a}, {b}]")
    weights = [_axis_weights(np.asarray(ax), lo, hi) for ax, (lo, hi) in zip(fld.axes, region)]
    mod = np.abs(fld.values)
    if math.isinf(p):
        mask = np.ix_(*[w > 0 for w in weights])
        return float(mod[mask].max()) if mod[mask].size else 0.0
    W = weights[0]
    for w in weights[1:]:
        W = np.multiply.outer(W, w)
    return float(np.sum(W * mod**p) ** (1.0 / p))


# ---------------------------------------------------------------- equidistribution

@dataclass
class EquidistributionReport:
    """Thin/thick average-density ratios of |E_Q f|^2 around V = span{e2, e3}."""

    form: str
    R: float
    rhos: tuple
    ratios: tuple
    packets: int
    node_ratios: tuple  # |N_{R^{1/2}}| / |N_{rho^{1/2}}| in grid nodes: the largest possible ratio
    meta: dict = field(default_factory=dict)

    def ratio_at(self, rho: float) -> float:
        return self.ratios[self.rhos.index(float(rho))]

    @property
    def thinnest(self) -> float:
        return self.ratios[int(np.argmin(self.rhos))]

    def rows(self) -> list[dict]:
        return [{"form": self.form, "R": self.R, "rho": r, "ratio": q,
                 "concentration_bound": math.sqrt(self.R / r), "node_ratio": b}
                for r, q, b in zip(self.rhos, self.ratios, self.node_ratios)]


def _check_eq_params(form, R, rhos):
    if form not in EQ_FORMS:
        raise ParameterError(f"form must be one of {sorted(EQ_FORMS)}, got {form!r}")
    R = float(R)
    if not 16 <= R <= 1024 or abs(math.log2(R) - round(math.log2(R))) > 1e-12:
        raise ParameterError(f"R must be a power of 2 in [16, 1024], got {R}")
    rhos = tuple(sorted(float(r) for r in rhos))
    if not rhos or rhos[0] < 1 or rhos[-1] > R:
        raise ParameterError(f"rho values must lie in [1, R] = [1, {R}]")
    return R, rhos


def tangent_packets(form: str, R: float, single: bool = False) -> list:
    """(cap centre, v) pairs on the line A = {G(w) in V}, kept by the tangency filter.

    Caps are centred on A at spacing CAP_SPACING R^{-1/2}; v runs over R^{1/2} Z in the x2
    slot (cores inside V) with |v2| <= 2R, so every point of V in B(0,R) meets one tube per cap.
    """
    r = R ** -0.5
    axis = EQ_LINE_AXIS[form]
    if single:
        cands = [(np.zeros(2), np.zeros(2))]
    else:
        s = CAP_SPACING * r
        m = int(np.floor((1 - r) / s))
        k = int(np.floor(2 * R * r))
        cands = []
        for a in np.arange(-m, m + 1) * s:
            c = np.zeros(2)
            c[axis] = a
            cands += [(c, np.array([0.0, v])) for v in np.arange(-k, k + 1) / r]
    V = Subspace(np.eye(3)[:, 1:])
    phase = PhaseFamily.extension(EQ_FORMS[form])
    return tangency_filter(cands, V, R, phase, None, delta=0.0, delta_m=0.0)


def packet_sum(form: str, R: float, packets, step: float) -> SampledFunction:
    """sum of e^{-2 pi i <v, w>} psi(R^{1/2}(w - w_theta)) with unit coefficients."""
    r = R ** -0.5
    axis = EQ_LINE_AXIS[form]
    lo, hi = np.full(2, -r), np.full(2, r)
    lo[axis], hi[axis] = -1.0, 1.0
    f = SampledFunction.zeros(2, step, lo, hi)
    W = f.mesh()
    groups: dict = {}
    for c, v in packets:
        groups.setdefault(tuple(np.asarray(c, dtype=float)), []).append(np.asarray(v, dtype=float))
    vals = np.zeros(W.shape[:-1], dtype=complex)
    for c, vs in groups.items():
        b = bump(np.linalg.norm(W - np.array(c), axis=-1) / r)
        ax0, ax1 = f.axes
        vs = np.array(vs)
        E0 = np.exp(-2j * np.pi * np.outer(ax0, vs[:, 0]))
        E1 = np.exp(-2j * np.pi * np.outer(ax1, vs[:, 1]))
        vals += b * (E0 @ E1.T)
    return SampledFunction(2, step, f.origin, vals)


def equidistribution_demo(form: str, R: float = 256.0, rhos=DEFAULT_RHOS,
                          single_packet: bool = False) -> EquidistributionReport:
    """Average density of |E_Q f|^2 on N_{rho^{1/2}}V over that on N_{R^{1/2}}V, inside B(0,R).

    n = 3, V = span{e2, e3}. Elliptic Q = (w1^2 + w2^2)/2, hyperbolic Q = w1 w2. The input
    sums all tangent packets with cores in V and unit coefficients, so their phases agree on V.
    """
    R, rhos = _check_eq_params(form, R, rhos)
    packets = tangent_packets(form, R, single_packet)
    if not packets:
        raise ParameterError("no wave packet passed the tangency filter")
    step = 1.0 / (8 * R)  # resolves |x| <= 2^{1/2} R with margin
    f = packet_sum(form, R, packets, step)
    half = math.sqrt(R)
    axes = [grid_axis(-half, half, EQ_X1_STEP), grid_axis(-R, R, EQ_X1_STEP),
            np.linspace(-R, R, EQ_X3_SLICES)]
    fld = extension(EQ_FORMS[form], f, axes)
    X = fld.mesh()
    dens = np.abs(fld.values) ** 2
    ball = np.linalg.norm(X, axis=-1) <= R
    x1 = np.abs(X[..., 0])
    thick = ball & (x1 <= half + REGION_TOL)
    base = dens[thick].mean()
    ratios, nodes = [], []
    for rho in rhos:
        thin = ball & (x1 <= math.sqrt(rho) + REGION_TOL)
        ratios.append(float(dens[thin].mean() / base))
        nodes.append(float(thick.sum() / thin.sum()))
    meta = {"V": "span{e2,e3}", "cap_spacing": CAP_SPACING, "v_lattice": half,
            "tangency_delta": 0.0, "tangency_delta_m": 0.0, "w_step": step,
            "x_step": EQ_X1_STEP, "x3_slices": EQ_X3_SLICES, "coefficients": "unit"}
    return EquidistributionReport(form, R, rhos, tuple(ratios), len(packets), tuple(nodes), meta)


# ---------------------------------------------------------------- configs

QUANTITIES = ("lhs", "rhs", "ratio")


@dataclass(frozen=True)
class ScanSpec:
    """One example scan and the check applied to the fitted slope of `quantity`."""

    name: str
    kind: str
    n: int = 3
    sigma: int = 0
    k: int = 2
    p: float = 4.0
    quantity: str = "ratio"
    slope: float | None = None  # expected slope, checked to within `tolerance`
    tolerance: float = 0.15
    min_slope: float | None = None  # or: slope must exceed this


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    lambda_list: tuple
    scans: tuple
    seed: int = 0
    count: int = 1000
    outputs: dict = field(default_factory=dict)


def _field(data, key, kind, where, default=...):
    if key not in data:
        if default is ...:
            raise ParameterError(f"config field {where}{key!r} is required")
        return default
    val = data[key]
    ok = {"str": isinstance(val, str),
          "int": isinstance(val, int) and not isinstance(val, bool),
          "num": isinstance(val, (int, float)) and not isinstance(val, bool),
          "list": isinstance(val, list),
          "dict": isinstance(val, dict)}[kind]
    if not ok:
        raise ParameterError(f"config field {where}{key!r} must be of type {kind}, got {val!r}")
    return val


def _parse_p(val, where):
    if isinstance(val, str):
        try:
            return float(Fraction(val))
        except (ValueError, ZeroDivisionError):
            raise ParameterError(f"config field {where}'p' is not a number: {val!r}") from None
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    raise ParameterError(f"config field {where}'p' must be a number, got {val!r}")


def parse_config(data) -> ExperimentConfig:
    """Validate a config mapping; errors name the offending field."""
    if not isinstance(data, dict):
        raise ParameterError("config must be a JSON object")
    name = _field(data, "name", "str", "")
    lams = _field(data, "lambda_list", "list", "")
    if len(lams) < 3 or not all(isinstance(x, (int, float)) and x > 0 for x in lams):
        raise ParameterError("config field 'lambda_list' needs at least 3 positive numbers")
    seed = _field(data, "seed", "int", "", 0)
    count = _field(data, "count", "int", "", 1000)
    outputs = _field(data, "outputs", "dict", "", {})
    scans = []
    for i, s in enumerate(_field(data, "scans", "list", "")):
        where = f"scans[{i}]."
        if not isinstance(s, dict):
            raise ParameterError(f"config field 'scans[{i}]' must be an object")
        kind = _field(s, "kind", "str", where)
        if kind not in ex_mod.KINDS:
            raise ParameterError(f"config field {where}'kind' must be one of {ex_mod.KINDS}, got {kind!r}")
        quantity = _field(s, "quantity", "str", where, "ratio")
        if quantity not in QUANTITIES:
            raise ParameterError(f"config field {where}'quantity' must be one of {QUANTITIES}")
        slope = s.get("slope")
        min_slope = s.get("min_slope")
        if (slope is None) == (min_slope is None):
            raise ParameterError(f"config field {where}'slope' or 'min_slope' (exactly one) is required")
        for key, val in (("slope", slope), ("min_slope", min_slope)):
            if val is not None and not isinstance(val, (int, float)):
                raise ParameterError(f"config field {where}{key!r} must be a number")
        scans.append(ScanSpec(
            name=_field(s, "name", "str", where, f"{kind}-{i}"),
            kind=kind,
            n=_field(s, "n", "int", where, 3),
            sigma=_field(s, "sigma", "int", where, 0),
            k=_field(s, "k", "int", where, 2),
            p=_parse_p(s.get("p", 4.0), where),
            quantity=quantity,
            slope=None if slope is None else float(slope),
            tolerance=float(_field(s, "tolerance", "num", where, 0.15)),
            min_slope=None if min_slope is None else float(min_slope),
        ))
    if not scans:
        raise ParameterError("config field 'scans' must list at least one scan")
    return ExperimentConfig(name, tuple(float(x) for x in lams), tuple(scans), seed, count, outputs)


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as e:
        raise ParameterError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ParameterError(f"config {path} is not valid JSON: {e}") from None
    return parse_config(data)


def shipped_config(name: str) -> Path:
    """Path of a config bundled with the package, e.g. 'necessity-n3'."""
    path = Path(__file__).parent / "configs" / f"{name}.json"
    if not path.exists():
        raise ParameterError(f"no shipped config named {name!r}")
    return path


# ---------------------------------------------------------------- output

def write_csv(rows: list[dict], columns=None) -> str:
    """RFC-4180 CSV (CRLF line ends) with a header row; floats use repr."""
    columns = list(columns or (rows[0].keys() if rows else []))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in (row[c] for c in columns)])
    return buf.getvalue()


def line_chart_svg(series: dict, title: str, xlabel: str, ylabel: str,
                   width: int = 480, height: int = 320) -> str:
    """Minimal SVG line chart; `series` maps a label to a list of (x, y) points."""
    pts = [xy for s in series.values() for xy in s]
    if not pts:
        raise ParameterError("nothing to plot")
    xs, ys = [x for x, _ in pts], [y for _, y in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    x1, y1 = (x1 if x1 > x0 else x0 + 1), (y1 if y1 > y0 else y0 + 1)
    m = 50

    def sx(x):
        return m + (x - x0) / (x1 - x0) * (width - 2 * m)

    def sy(y):
        return height - m - (y - y0) / (y1 - y0) * (height - 2 * m)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle">{_esc(title)}</text>',
           f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
           f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>',
           f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle">{_esc(xlabel)}</text>',
           f'<text x="15" y="{height / 2:.1f}" transform="rotate(-90 15 {height / 2:.1f})" '
           f'text-anchor="middle">{_esc(ylabel)}</text>']
    for val, (px, anchor) in ((x0, (sx(x0), "start")), (x1, (sx(x1), "end"))):
        out.append(f'<text x="{px:.1f}" y="{height - m + 15}" text-anchor="{anchor}">{val:.3g}</text>')
    for val in (y0, y1):
        out.append(f'<text x="{m - 5}" y="{sy(val):.1f}" text-anchor="end">{val:.3g}</text>')
    for i, (label, s) in enumerate(series.items()):
        c = colors[i % len(colors)]
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in s)
        out.append(f'<polyline fill="none" stroke="{c}" points="{path}"/>')
        out.append(f'<text x="{width - m + 5}" y="{m + 15 * i}" fill="{c}" font-size="10">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# ---------------------------------------------------------------- runs

@dataclass
class ArtifactBundle:
    csv: str
    svg: str
    metadata: dict
    fits: dict
    passed: bool

    def write(self, out_dir, stem: str) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"csv": out / f"{stem}.csv", "svg": out / f"{stem}.svg",
                 "metadata": out / f"{stem}.json"}
        paths["csv"].write_text(self.csv, newline="")
        paths["svg"].write_text(self.svg)
        paths["metadata"].write_text(json.dumps(self.metadata, indent=2, sort_keys=True) + "\n")
        return {k: str(v) for k, v in paths.items()}


SCAN_COLUMNS = ("scan", "kind", "n", "sigma", "k", "p", "lambda", "lhs", "rhs", "ratio",
                "predicted_exponent")


def _constants() -> dict:
    return {
        "region_c": ex_mod.REGION_C, "separation_C": ex_mod.SEPARATION_C,
        "wedge_min": ex_mod.WEDGE_MIN, "certificate_min": ex_mod.CERT_MIN,
        "plateau": ex_mod.PLATEAU, "floor_percentile": ex_mod.PERCENTILE,
        "wave_packet_delta": DEFAULT_DELTA, "wave_packet_delta_m": DEFAULT_DELTA_M,
        "bump": "exp(-1/(1-|u|^2)) on |u|<1; plateau bump 1 on |u|<=1/2",
    }


def run_experiment(config) -> ArtifactBundle:
    """Run every scan of the config, fit slopes and check them; deterministic given the config."""
    if isinstance(config, (str, Path)):
        config = load_config(config)
    elif isinstance(config, dict):
        config = parse_config(config)
    rows, fits, checks = [], {}, {}
    series = {}
    for s in config.scans:
        try:
            scan = ex_mod.example_scan(s.kind, config.lambda_list, s.n, s.sigma, s.k, s.p,
                                       config.seed, config.count)
        except ParameterError as e:
            raise ParameterError(f"scan {s.name!r}: {e}") from None
        for r in scan:
            rows.append({"scan": s.name, "kind": s.kind, "n": s.n, "sigma": s.sigma, "k": s.k,
                         "p": s.p, **r})
        fit = power_law_fit([(r["lambda"], r[s.quantity]) for r in scan])
        if s.slope is not None:
            ok = abs(fit.slope - s.slope) <= s.tolerance
            expect = f"{s.slope} +- {s.tolerance}"
        else:
            ok = fit.slope > s.min_slope
            expect = f"> {s.min_slope}"
        fits[s.name] = {"quantity": s.quantity, "slope": fit.slope, "intercept": fit.intercept,
                        "residual": fit.residual, "expected": expect, "pass": bool(ok)}
        checks[s.name] = bool(ok)
        series[f"{s.name} ({s.quantity})"] = [(math.log2(r["lambda"]), math.log2(r[s.quantity]))
                                               for r in scan]
    meta = {
        "config": config.name,
        "lambda_list": list(config.lambda_list),
        "seed": config.seed,
        "count": config.count,
        "scans": [s.__dict__ for s in config.scans],
        "fits": fits,
        "constants": _constants(),
        "versions": {"sigos": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
        "passed": all(checks.values()),
    }
    svg = line_chart_svg(series, config.name, "log2 lambda", "log2 value")
    return ArtifactBundle(write_csv(rows, SCAN_COLUMNS), svg, meta, fits, all(checks.values()))


def require(passed: bool, message: str) -> None:
    if not passed:
        raise AcceptanceFailure(message)
