import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigos import experiments as X
from sigos.errors import ParameterError
from sigos.oscillatory import Field, grid_axis

R = 256.0


def gaussian_field(step, half=6.0, dim=2):
    axes = tuple(grid_axis(-half, half, step) for _ in range(dim))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return Field(axes, np.exp(-np.pi * np.sum(mesh**2, axis=-1)) * np.exp(2j * mesh[..., 0]))


# ---------------------------------------------------------------- lp_norm

def test_lp_norm_constant_on_unit_box():
    ax = grid_axis(0.0, 1.0, 1 / 64)
    fld = Field((ax, ax), np.ones((len(ax), len(ax)), dtype=complex))
    assert X.lp_norm(fld, 2) == pytest.approx(1.0, abs=1e-12)
    assert X.lp_norm(fld, 2, [(0, 0.5), (0, 1)]) == pytest.approx(math.sqrt(0.5), abs=1e-12)


def test_lp_norm_inf_is_max_modulus():
    rng = np.random.default_rng(0)
    ax = grid_axis(-1, 1, 0.1)
    vals = rng.normal(size=(len(ax), len(ax))) + 1j * rng.normal(size=(len(ax), len(ax)))
    fld = Field((ax, ax), vals)
    assert X.lp_norm(fld, np.inf) == np.max(np.abs(vals))


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0, 4.5])
def test_lp_norm_gaussian_closed_form(p):
    # int exp(-p pi |x|^2) over R^2 = 1/p
    assert X.lp_norm(gaussian_field(1 / 16), p) == pytest.approx((1 / p) ** (1 / p), rel=1e-4)


def test_lp_norm_refinement_stability():
    for p in (2.0, 3.0, 10 / 3):
        a, b = X.lp_norm(gaussian_field(1 / 8), p), X.lp_norm(gaussian_field(1 / 16), p)
        assert abs(a - b) <= 1e-4 * b


def test_lp_norm_region_errors():
    fld = gaussian_field(0.5)
    with pytest.raises(ParameterError):
        X.lp_norm(fld, 2, [(-7, 0), (0, 1)])
    with pytest.raises(ParameterError):
        X.lp_norm(fld, 2, [(0, 1)])
    with pytest.raises(ParameterError):
        X.lp_norm(fld, 0.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(1, 8), st.floats(0.1, 10), st.floats(-6, 0), st.floats(0, 6))
def test_lp_norm_homogeneous_and_monotone(p, c, lo, hi):
    fld = gaussian_field(0.25)
    scaled = Field(fld.axes, c * fld.values)
    assert X.lp_norm(scaled, p) == pytest.approx(c * X.lp_norm(fld, p), rel=1e-12)
    part = X.lp_norm(fld, p, [(lo, hi), (-6, 6)])
    assert part <= X.lp_norm(fld, p) * (1 + 1e-12)


# ---------------------------------------------------------------- power-law fits

def test_fit_exact_power_laws():
    lams = [64.0, 128.0, 256.0, 512.0]
    fit = X.power_law_fit([(l, 1 / l) for l in lams])
    assert fit.slope == pytest.approx(-1.0, abs=1e-12) and fit.residual <= 1e-12
    fit = X.power_law_fit([(l, 3 * l**0.5) for l in lams])
    assert fit.slope == pytest.approx(0.5, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3), abs=1e-12)
    assert fit.predict(1024.0) == pytest.approx(3 * 32.0, rel=1e-12)


def test_fit_noisy_slope_within_three_noise_levels():
    rng = np.random.default_rng(11)
    lams = np.array([64.0, 128.0, 256.0, 512.0])
    x = np.log(lams)
    noise = 0.02
    level = noise / np.sqrt(np.sum((x - x.mean()) ** 2))  # std of the fitted slope
    misses = 0
    for _ in range(200):
        vals = lams**-0.75 * np.exp(rng.normal(0, noise, len(lams)))
        misses += abs(X.power_law_fit(zip(lams, vals)).slope + 0.75) > 3 * level
    assert misses <= 4  # a 3-sigma band misses 0.27% of the time


def test_fit_errors():
    with pytest.raises(ParameterError):
        X.power_law_fit([(1, 1), (2, 0.0), (3, 1)])
    with pytest.raises(ParameterError):
        X.power_law_fit([(1, 1), (2, 2)])


# ---------------------------------------------------------------- equidistribution

@pytest.fixture(scope="module")
def reports():
    return {(form, single): X.equidistribution_demo(form, R, single_packet=single)
            for form in ("elliptic", "hyperbolic") for single in (False, True)}


def test_elliptic_ratio_bounded(reports):
    rep = reports["elliptic", False]
    assert rep.rhos == X.DEFAULT_RHOS
    assert max(rep.ratios) <= 4


def test_hyperbolic_concentrates(reports):
    ell, hyp = reports["elliptic", False], reports["hyperbolic", False]
    assert hyp.thinnest >= 4 * ell.thinnest
    # growth like (R/rho)^{1/2} at the smallest rho
    assert hyp.thinnest >= 0.5 * math.sqrt(R / min(hyp.rhos))


def test_ratios_never_exceed_volume_ratio(reports):
    for rep in reports.values():
        for q, b in zip(rep.ratios, rep.node_ratios):
            assert q <= b * (1 + 1e-12)
        assert rep.ratio_at(R) == pytest.approx(1.0)


def test_single_packet_matches_one_tube_profile(reports):
    # a lone tube has the same transverse profile for both forms
    a, b = reports["elliptic", True], reports["hyperbolic", True]
    assert a.packets == b.packets == 1
    for qa, qb in zip(a.ratios, b.ratios):
        assert qa <= 4 and qb <= 4
        assert qa == pytest.approx(qb, rel=0.1)
    # the elliptic sum is as spread out as a single tube
    for qs, qe in zip(a.ratios, reports["elliptic", False].ratios):
        assert qe == pytest.approx(qs, rel=0.1)


def test_tangency_filter_keeps_the_line_packets(reports):
    for form in ("elliptic", "hyperbolic"):
        kept = X.tangent_packets(form, R)
        assert len(kept) == reports[form, False].packets
        axis = X.EQ_LINE_AXIS[form]
        assert all(c[1 - axis] == 0 and v[0] == 0 for c, v in kept)


def test_equidistribution_parameter_errors():
    with pytest.raises(ParameterError):
        X.equidistribution_demo("parabolic", R)
    with pytest.raises(ParameterError):
        X.equidistribution_demo("elliptic", 100.0)
    with pytest.raises(ParameterError):
        X.equidistribution_demo("elliptic", R, rhos=[0.5, 4])
    with pytest.raises(ParameterError):
        X.equidistribution_demo("elliptic", R, rhos=[1, 2 * R])


# ---------------------------------------------------------------- configs and runs

SMALL = {
    "name": "small",
    "lambda_list": [16, 32, 64],
    "seed": 3,
    "scans": [
        {"name": "multi", "kind": "tensor_multi", "n": 3, "sigma": 0, "k": 2, "p": 4,
         "quantity": "ratio", "slope": 0.0, "tolerance": 0.2},
        {"name": "hyp-norm", "kind": "hyp_tuple", "n": 3, "k": 2, "quantity": "rhs",
         "slope": -0.5, "tolerance": 0.05},
    ],
}


def test_run_experiment_is_deterministic(tmp_path):
    a, b = X.run_experiment(SMALL), X.run_experiment(json.loads(json.dumps(SMALL)))
    assert a.csv == b.csv and a.svg == b.svg and a.metadata == b.metadata
    assert a.passed
    paths = a.write(tmp_path, "small")
    assert open(paths["csv"], newline="").read() == a.csv
    rows = list(csv.DictReader(io.StringIO(a.csv)))
    assert list(rows[0]) == list(X.SCAN_COLUMNS)
    assert len(rows) == 6 and "\r\n" in a.csv
    assert a.svg.startswith("<svg") and a.svg.count("<polyline") == 2
    meta = json.loads(open(paths["metadata"]).read())
    assert meta["seed"] == 3 and "separation_C" in meta["constants"]
    assert meta["versions"]["sigos"]


def test_run_experiment_reports_failed_checks():
    cfg = json.loads(json.dumps(SMALL))
    cfg["scans"][1]["slope"] = 0.5
    out = X.run_experiment(cfg)
    assert not out.passed and out.fits["hyp-norm"]["pass"] is False
    assert out.fits["multi"]["pass"] is True


@pytest.mark.parametrize("mutate, field_name", [
    (lambda c: c.pop("lambda_list"), "lambda_list"),
    (lambda c: c.update(lambda_list=[1, 2]), "lambda_list"),
    (lambda c: c["scans"][0].update(kind="bogus"), "scans[0].'kind'"),
    (lambda c: c["scans"][1].update(quantity="x"), "scans[1].'quantity'"),
    (lambda c: c["scans"][0].pop("slope"), "scans[0].'slope'"),
    (lambda c: c["scans"][0].update(p="four"), "scans[0].'p'"),
    (lambda c: c.update(seed="0"), "'seed'"),
])
def test_malformed_config_names_the_field(mutate, field_name):
    cfg = json.loads(json.dumps(SMALL))
    mutate(cfg)
    with pytest.raises(ParameterError, match=field_name.replace("[", r"\[").replace("]", r"\]")):
        X.parse_config(cfg)


def test_load_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ParameterError):
        X.load_config(bad)
    with pytest.raises(ParameterError):
        X.load_config(tmp_path / "missing.json")
    with pytest.raises(ParameterError):
        X.shipped_config("nope")


def test_shipped_config_parses():
    cfg = X.load_config(X.shipped_config("necessity-n3"))
    assert cfg.lambda_list == (64.0, 128.0, 256.0, 512.0)
    assert {s.kind for s in cfg.scans} == {"hyp_tuple", "ell_tuple", "bourgain_lin", "tensor_multi"}
    assert [s.p for s in cfg.scans if s.kind == "tensor_multi"] == [4.0, 3.5]


def test_csv_quoting():
    text = X.write_csv([{"a": 'x,"y"', "b": 0.1}])
    assert text == 'a,b\r\n"x,""y""",0.1\r\n'
