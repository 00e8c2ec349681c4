"""Command-line interface: `sigos <subcommand>`.

Exit codes: 0 pass, 1 parameter error, 2 acceptance failure.
"""
from __future__ import annotations

import json
import sys
import warnings
from fractions import Fraction
from pathlib import Path

import click
import numpy as np

from . import decoupling as dec
from . import examples as ex_mod
from . import experiments as xp
from . import exponents as ex
from . import geometry as geo
from . import oscillatory as osc
from . import wavepackets as wp
from .errors import AcceptanceFailure, InfeasibleError, ParameterError

EXIT_PARAM, EXIT_ACCEPT = 1, 2


def _floats(text: str, name: str) -> list[float]:
    try:
        return [float(Fraction(t.strip())) for t in text.split(",") if t.strip()]
    except (ValueError, ZeroDivisionError):
        raise ParameterError(f"--{name} must be a comma-separated list of numbers, got {text!r}") from None


def _fraction(text: str, name: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ParameterError(f"--{name} must be a number or fraction, got {text!r}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, newline="")
        click.echo(f"wrote {out}", err=True)
    else:
        click.echo(text, nl=False)


def _fmt(value) -> str:
    if value is ex.INF:
        return "inf"
    return str(value)


@click.group()
@click.version_option(package_name="artifact")
def cli():
    """Laboratory for oscillatory integral operators of arbitrary signature."""


# ---------------------------------------------------------------- exponents

def _exponent_rows(n, sigma, k=None, m=None, d=None):
    rows = [{"n": n, "sigma": sigma, "k": "", "function": "main_threshold",
             "value": _fmt(ex.main_threshold(n, sigma)), "regime": ""}]
    if k is not None:
        r = ex.kbroad_threshold(n, sigma, k)
        rows.append({"n": n, "sigma": sigma, "k": k, "function": "kbroad_threshold",
                     "value": _fmt(r.value), "regime": r.regime})
        try:
            ld = ex.optimal_ld(n, sigma, k)
            rows.append({"n": n, "sigma": sigma, "k": k, "function": "q",
                         "value": _fmt(ld.q), "regime": f"{ld.row} (l={ld.ell}, d={ld.d})"})
        except InfeasibleError:
            pass
    if m is not None:
        r = ex.mu(n, sigma, m)
        rows.append({"n": n, "sigma": sigma, "k": m, "function": "mu",
                     "value": _fmt(r.value), "regime": r.regime})
    if d is not None:
        rows.append({"n": n, "sigma": sigma, "k": d, "function": "nu",
                     "value": _fmt(ex.nu(n, sigma, d)), "regime": ""})
        for name, fn in (("e", ex.dec_exponent), ("p_dec", ex.dec_range_report)):
            r = fn(n, sigma, d)
            rows.append({"n": n, "sigma": sigma, "k": d, "function": name,
                         "value": _fmt(r.value), "regime": r.regime})
    return rows


EXPONENT_COLUMNS = ("n", "sigma", "k", "function", "value", "regime")


@cli.command()
@click.option("--n", "n", type=int, help="Ambient dimension.")
@click.option("--sigma", type=int, help="Signature.")
@click.option("--k", type=int, help="Broadness level k (k-broad threshold and q).")
@click.option("--m", type=int, help="Variety dimension m (mu).")
@click.option("--d", type=int, help="Subspace dimension d (nu, e, p_dec).")
@click.option("--table", is_flag=True, help="Every function for every admissible sigma and parameter of n.")
@click.option("--verify-closure", is_flag=True, help="Run the closure check for all n up to --max-n.")
@click.option("--max-n", type=int, default=12, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), help="CSV output path (default stdout).")
def exponents(n, sigma, k, m, d, table, verify_closure, max_n, out):
    """Exact exponent values as CSV (n,sigma,k,function,value,regime).

    The k column holds the parameter of the function: k, m or d.
    """
    if verify_closure:
        rows = []
        for nn, s in ex.admissible_pairs(max_n):
            r = ex.verify_closure(nn, s)
            rows.append({"n": nn, "sigma": s, "k_star": r.k_star, "achieved": _fmt(r.achieved),
                         "threshold": _fmt(r.threshold), "pass": r.ok})
        _emit(xp.write_csv(rows), out)
        if not all(r["pass"] for r in rows):
            raise AcceptanceFailure("closure check failed")
        return
    if n is None:
        raise ParameterError("--n is required")
    if table:
        sigmas = [sigma] if sigma is not None else ex.admissible_sigmas(n)
        rows = []
        for s in sigmas:
            ex.check_pair(n, s)
            rows += _exponent_rows(n, s)[:1]
            for j in range(1, n + 1):
                rows += _exponent_rows(n, s, k=j, m=j, d=j)[1:]
        _emit(xp.write_csv(rows, EXPONENT_COLUMNS), out)
        return
    if sigma is None:
        raise ParameterError("--sigma is required without --table")
    _emit(xp.write_csv(_exponent_rows(n, sigma, k, m, d), EXPONENT_COLUMNS), out)


# ---------------------------------------------------------------- geometry

@cli.command("geometry-fuzz")
@click.option("--n", "n", type=int, required=True)
@click.option("--sigma", type=int, required=True)
@click.option("--dim-v", type=int, required=True)
@click.option("--trials", type=int, default=10000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False))
def geometry_fuzz(n, sigma, dim_v, trials, seed, out):
    """Random-instance check of the eigenvalue-count and auxiliary-subspace bounds."""
    rep = geo.fuzz_campaign(n, sigma, dim_v, trials, seed)
    _emit(xp.write_csv(rep.rows, ("trial", "dimV", "dimVaux", "eigcount", "bound", "pass")), out)
    click.echo(f"violations: {rep.violations} of {trials}", err=True)
    if rep.violations:
        raise AcceptanceFailure(f"{rep.violations} violations")


# ---------------------------------------------------------------- operator

def _parse_region(text: str, res: float) -> list[np.ndarray]:
    axes = []
    if res <= 0:
        raise ParameterError("--res must be positive")
    for part in text.replace("×", "x").split("x"):
        bounds = _floats(part, "region")
        if len(bounds) != 2 or bounds[1] < bounds[0]:
            raise ParameterError(f"--region axis {part!r} must read lo,hi with lo <= hi")
        axes.append(osc.grid_axis(bounds[0], bounds[1], res))
    return axes


def _load_input(path) -> osc.SampledFunction:
    try:
        return osc.SampledFunction.load(path)
    except (OSError, KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
        if isinstance(e, ParameterError):
            raise
        raise ParameterError(f"cannot read input function {path}: {e}") from None


@cli.command()
@click.option("--phase", required=True, help="extension:sigma[,n] | hd:d | ed:d | tensor:n,sigma")
@click.option("--lambda", "lam", type=float, help="Scale; omit for the extension operator.")
@click.option("--region", required=True, help="Box such as -4,4x-4,4x0,2 (one lo,hi per axis).")
@click.option("--res", type=float, default=0.5, show_default=True, help="Spatial grid step.")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--amplitude", type=click.Choice(["bump", "none"]), default="bump", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False))
def operator(phase, lam, region, res, input_path, amplitude, out):
    """Evaluate T^lambda f (or E_Q f) on a grid; CSV columns x1..xn, re, im."""
    fam = osc.PhaseFamily.parse(phase)
    f = _load_input(input_path)
    axes = _parse_region(region, res)
    if lam is None:
        if not fam.is_linear:
            raise ParameterError("--lambda is required for phases that are not linear in x_n")
        fld = osc.extension(fam.A_prime(0.0), f, axes)
    else:
        fld = osc.hormander(fam, lam, f, axes, amplitude=None if amplitude == "none" else "bump")
    X = fld.mesh().reshape(-1, len(axes))
    V = fld.values.ravel()
    cols = [f"x{i + 1}" for i in range(len(axes))] + ["re", "im"]
    rows = [dict(zip(cols, [*map(float, x), float(v.real), float(v.imag)])) for x, v in zip(X, V)]
    _emit(xp.write_csv(rows, cols), out)


# ---------------------------------------------------------------- wave packets

def _parse_vectors(text: str, dim: int, name: str) -> np.ndarray:
    """Vectors from a JSON file (list of lists) or inline 'a,b,c;d,e,f'."""
    p = Path(text)
    try:
        data = json.loads(p.read_text()) if p.exists() else \
            [_floats(v, name) for v in text.split(";")]
        A = np.asarray(data, dtype=float)
    except (ValueError, json.JSONDecodeError):
        raise ParameterError(f"{name} must be a JSON list of vectors or 'a,b;c,d'") from None
    if A.ndim != 2 or A.shape[1] != dim:
        raise ParameterError(f"{name} must list vectors of length {dim}")
    return A


@cli.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--R", "R", type=float, required=True)
@click.option("--delta", type=float, default=wp.DEFAULT_DELTA, show_default=True)
@click.option("--phase", default=None, help="Phase family (default: extension with sigma = n-1).")
@click.option("--lambda", "lam", type=float, default=None)
@click.option("--diag", required=True, help="reconstruct | ortho | tube:w1,..,v1,.. | tangent:V")
@click.option("--out", type=click.Path(dir_okay=False))
def wavepackets(input_path, R, delta, phase, lam, diag, out):
    """Wave-packet diagnostics as CSV."""
    f = _load_input(input_path)
    n = f.dim + 1
    fam = osc.PhaseFamily.parse(phase) if phase else \
        osc.PhaseFamily.extension(np.eye(f.dim))
    if fam.n != n:
        raise ParameterError(f"phase dimension {fam.n} does not match input dimension {f.dim}")
    kind, _, arg = diag.partition(":")
    if kind in ("reconstruct", "ortho"):
        D = wp.decompose(f, R, delta)
        if kind == "ortho":
            rows = [{"metric": "mass_ratio", "value": D.mass_ratio()},
                    {"metric": "packets", "value": len(D.packets)}]
        else:
            rec = D.reconstruct(f)
            err = _max_difference(f, rec) / max(float(np.max(np.abs(f.values))), 1e-300)
            rows = [{"metric": "relative_error", "value": err},
                    {"metric": "dropped_mass", "value": D.dropped_mass},
                    {"metric": "packets", "value": len(D.packets)}]
    elif kind == "tube":
        vals = _floats(arg, "diag tube")
        if len(vals) != 2 * f.dim:
            raise ParameterError(f"tube needs {2 * f.dim} numbers: cap centre then v")
        w0, v0 = np.array(vals[: f.dim]), np.array(vals[f.dim:])
        step = osc.max_step(np.sqrt(n) * R)
        step = 2.0 ** np.floor(np.log2(step))
        packet = wp.make_packet(w0, v0, R, step, delta)
        axes = [osc.grid_axis(-R, R, max(1.0, R / 128))] * n
        if fam.is_linear:
            fld = osc.extension(fam.A_prime(0.0), packet, axes)
        else:
            if lam is None:
                raise ParameterError("--lambda is required for curved phases")
            fld = osc.hormander(fam, lam, packet, axes, amplitude=None)
        tb = wp.tube(w0, fam, lam, R, delta, v=v0)
        rows = [{"dilate": k, "mass_fraction": wp.tube_mass_fraction(fld, tb, k)}
                for k in (0.5, 1.0, 1.5, 2.0)]
    elif kind == "tangent":
        V = geo.Subspace.span(_parse_vectors(arg, n, "tangent:V").T, n)
        D = wp.decompose(f, R, delta)
        kept = wp.tangency_filter(D.packets, V, R, fam, lam, delta)
        rows = [{**{f"w{i + 1}": float(c) for i, c in enumerate(p.theta_center)},
                 **{f"v{i + 1}": float(c) for i, c in enumerate(p.v)}, "mass": p.mass}
                for p in kept]
        click.echo(f"tangent packets: {len(kept)} of {len(D.packets)}", err=True)
        cols = [f"w{i + 1}" for i in range(f.dim)] + [f"v{i + 1}" for i in range(f.dim)] + ["mass"]
        _emit(xp.write_csv(rows, cols), out)
        return
    else:
        raise ParameterError(f"unknown --diag {diag!r}")
    _emit(xp.write_csv(rows), out)


def _max_difference(a: osc.SampledFunction, b: osc.SampledFunction) -> float:
    """max |a - b| over the nodes of a (b zero off its own box)."""
    idx = np.rint((a.origin - b.origin) / a.step).astype(int)
    total = np.zeros_like(a.values)
    src, dst = [], []
    for i, (o, la, lb) in enumerate(zip(idx, a.values.shape, b.values.shape)):
        lo, hi = max(0, -o), min(la, lb - o)
        if hi <= lo:
            return float(np.max(np.abs(a.values)))
        dst.append(slice(lo, hi))
        src.append(slice(lo + o, hi + o))
    total[tuple(dst)] = b.values[tuple(src)]
    return float(np.max(np.abs(a.values - total)))


# ---------------------------------------------------------------- examples

@cli.command()
@click.option("--kind", required=True, type=click.Choice(ex_mod.KINDS))
@click.option("--n", "n", type=int, default=3, show_default=True)
@click.option("--sigma", type=int, default=0, show_default=True)
@click.option("--k", type=int, default=2, show_default=True)
@click.option("--lambda-list", default="64,128,256,512", show_default=True)
@click.option("--p", default="4", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False))
def example(kind, n, sigma, k, lambda_list, p, seed, out):
    """lambda-scan of a sharp example; CSV lambda,lhs,rhs,ratio,predicted_exponent."""
    lams = _floats(lambda_list, "lambda-list")
    pv = _floats(p, "p")[0]
    rows = ex_mod.example_scan(kind, lams, n, sigma, k, pv, seed)
    _emit(xp.write_csv(rows, ("lambda", "lhs", "rhs", "ratio", "predicted_exponent")), out)
    if len(rows) >= 3:
        fit = xp.power_law_fit([(r["lambda"], r["ratio"]) for r in rows])
        click.echo(f"ratio slope {fit.slope:.4f} (predicted {rows[0]['predicted_exponent']:.4f})",
                   err=True)


# ---------------------------------------------------------------- decoupling

@cli.command()
@click.option("--form", required=True, help="sigma:n, the form Q_sigma in n-1 variables.")
@click.option("--V", "V_path", required=True, help="JSON list of spanning vectors, or 'a,b,c;d,e,f'.")
@click.option("--p", default="4", show_default=True, help="Lebesgue exponent (fractions allowed).")
@click.option("--delta-list", default=",".join(str(d) for d in dec.DEFAULT_DELTAS), show_default=True)
@click.option("--trials", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False))
def decoupling(form, V_path, p, delta_list, trials, seed, out):
    """Empirical decoupling-ratio scan; checks growth against e(n,sigma,d)(1/2-1/p) + 0.1."""
    try:
        sigma, n = (int(t) for t in form.split(":"))
    except ValueError:
        raise ParameterError(f"--form must read sigma:n, got {form!r}") from None
    ex.check_pair(n, sigma)
    V = geo.Subspace.span(_parse_vectors(V_path, n, "--V").T, n)
    pf = _fraction(p, "p")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sc = dec.decoupling_scan(geo.signature_matrix(n, sigma), V, pf, _floats(delta_list, "delta-list"),
                                 trials, seed)
    for w in caught:
        click.echo(f"warning: {w.message}", err=True)
    _emit(xp.write_csv(sc.rows, ("delta", "slabs", "overlap", "random_max", "extremal", "ratio",
                                 "bound")), out)
    click.echo(f"growth exponent {sc.growth_exponent:.4f}; bound {float(sc.bound_exponent):.4f}"
               + (f"; {', '.join(sc.tags)}" if sc.tags else ""), err=True)
    if sc.in_range and sc.growth_exponent > float(sc.bound_exponent) + 0.1:
        raise AcceptanceFailure("measured growth exceeds the decoupling exponent")


@cli.command()
@click.option("--phase", required=True)
@click.option("--lambda", "lam", type=float, required=True)
@click.option("--K", "K", type=float, required=True)
@click.option("--tau", required=True, help="Cap centre w_tau, comma-separated.")
@click.option("--max-leakage", type=float, default=1e-3, show_default=True)
def localize(phase, lam, K, tau, max_leakage):
    """Fourier mass of T^lambda f_tau (localised to a K^2 ball) outside its slab."""
    leak = dec.fourier_localization_leakage(phase, lam, K, _floats(tau, "tau"))
    click.echo(xp.write_csv([{"phase": phase, "lambda": lam, "K": K, "tau": tau, "leakage": leak}]),
               nl=False)
    if leak > max_leakage:
        raise AcceptanceFailure(f"leakage {leak:.3g} exceeds {max_leakage:g}")


# ---------------------------------------------------------------- experiments

@cli.command("demo-equidistribution")
@click.option("--R", "R", type=float, default=256.0, show_default=True)
@click.option("--rho-list", default="1,4,16,64,256", show_default=True)
@click.option("--form", type=click.Choice(["both", "elliptic", "hyperbolic"]), default="both",
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False))
def demo_equidistribution(R, rho_list, form, out):
    """Thin/thick density ratios around V = span{e2,e3} for tangent packets (n = 3)."""
    rhos = _floats(rho_list, "rho-list")
    forms = ["elliptic", "hyperbolic"] if form == "both" else [form]
    reps = {f: xp.equidistribution_demo(f, R, rhos) for f in forms}
    rows = [r for rep in reps.values() for r in rep.rows()]
    _emit(xp.write_csv(rows), out)
    if form == "both":
        ell, hyp = reps["elliptic"], reps["hyperbolic"]
        click.echo(f"elliptic max {max(ell.ratios):.3f}; hyperbolic/elliptic at rho = "
                   f"{min(rhos):g}: {hyp.thinnest / ell.thinnest:.3f}", err=True)
        if max(ell.ratios) > 4 or hyp.thinnest < 4 * ell.thinnest:
            raise AcceptanceFailure("equidistribution dichotomy not observed")


@cli.command()
@click.argument("config")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".", show_default=True)
def run(config, out_dir):
    """Run a JSON experiment config (a path, or the name of a shipped config)."""
    path = Path(config)
    if not path.exists():
        path = xp.shipped_config(config)
    bundle = xp.run_experiment(path)
    paths = bundle.write(out_dir, bundle.metadata["config"])
    for name, fit in bundle.fits.items():
        click.echo(f"{name}: slope {fit['slope']:.4f} expected {fit['expected']} "
                   f"{'pass' if fit['pass'] else 'FAIL'}", err=True)
    click.echo(f"wrote {paths['csv']}", err=True)
    if not bundle.passed:
        raise AcceptanceFailure("some fitted slopes are outside their bands")


def main(argv=None) -> int:
    """Console entry point mapping errors to exit codes 1 and 2."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_PARAM
    except click.ClickException as e:
        e.show()
        return EXIT_PARAM
    except (ParameterError, InfeasibleError) as e:
        click.echo(f"parameter error: {e}", err=True)
        return EXIT_PARAM
    except AcceptanceFailure as e:
        click.echo(f"acceptance failure: {e}", err=True)
        return EXIT_ACCEPT
    return 0


if __name__ == "__main__":
    sys.exit(main())
