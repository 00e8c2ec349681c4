"""Acceptance criteria 1-9: one PASS/FAIL line each, with the measured runtime."""
import time
from contextlib import contextmanager
from fractions import Fraction as F

import numpy as np

from conftest import ACCEPTANCE_LINES
from sigos import decoupling as D
from sigos import experiments as X
from sigos import exponents as ex
from sigos import geometry as g
from sigos import oscillatory as osc
from sigos import wavepackets as wp
from sigos.exponents import INF
from sigos.geometry import Subspace, pair_form, signature_matrix
from sigos.oscillatory import PhaseFamily, SampledFunction, grid_axis


@contextmanager
def criterion(number: int, title: str, limit: float):
    """Times the body, records a PASS/FAIL line and enforces the runtime limit."""
    t0 = time.perf_counter()
    status, detail = "FAIL", ""
    notes: list = []
    try:
        yield notes
        elapsed = time.perf_counter() - t0
        status = "PASS" if elapsed < limit else "FAIL"
        if elapsed >= limit:
            detail = f" over the {limit:g} s limit"
        assert elapsed < limit, f"criterion {number} took {elapsed:.1f} s (limit {limit:g} s)"
    finally:
        elapsed = time.perf_counter() - t0
        extra = ("; " + "; ".join(notes)) if notes else ""
        line = f"criterion {number} [{status}] {title}: {elapsed:.2f} s{detail}{extra}"
        ACCEPTANCE_LINES[number] = line
        print(line)


def test_criterion_1_exponent_tables():
    with criterion(1, "exponent golden tables", 1.0) as notes:
        count = 0
        for n in range(2, 13):
            top, low = ex.main_threshold(n, n - 1), ex.main_threshold(n, (n - 1) % 2)
            if n % 2:
                assert top == F(2 * (3 * n + 1), 3 * n - 3) and low == F(2 * (n + 1), n - 1)
            else:
                assert top == F(2 * (3 * n + 2), 3 * n - 2) and low == F(2 * (n + 2), n)
            for k in range(3, n + 1):
                assert ex.dec_exponent(n, n - 1, k - 1).value == F(k - 2, 2)
                assert ex.dec_range(n, n - 1, k - 1) == F(2 * k, k - 2)
            count += 2
        for n, sigma in ex.admissible_pairs(12):
            for k in range(1, n + 1):
                c = ex.optimal_ld(n, sigma, k)
                if 2 * k <= n - sigma + 1:
                    assert (c.ell, c.d, c.q) == (k, n - sigma, F(2 * (n + 1), n - 1))
                elif 2 * k <= n + sigma + 1:
                    assert (c.ell, c.d) == ((n - sigma + 1) // 2, n - sigma)
                    assert c.q == F(2 * (n + 2 * k + sigma + 1), n + 2 * k + sigma - 3)
                else:
                    assert (c.ell, c.d, c.q) == (n - k + 1, 2 * n - 2 * k + 1, F(2 * k, k - 1))
                assert c.q == ex.kbroad_threshold(n, sigma, k).value
                assert ex.multilinear_q(n, k, c.ell) == c.q
                count += 1
            for m in range(1, n + 1):
                assert ex.mu(n, sigma, m).value >= 0
                assert 0 <= ex.nu(n, sigma, m) <= n - 1
                assert ex.dec_exponent(n, sigma, m).value >= 0
                assert ex.dec_range(n, sigma, m) is INF or ex.dec_range(n, sigma, m) > 2
        # the (3,0) pair and its k = 2 row
        assert ex.main_threshold(3, 0) == 4 and ex.main_threshold(3, 2) == F(10, 3)
        assert ex.multilinear_q(3, 2, 2) == 4
        notes.append(f"{count} exact identities")


def test_criterion_2_closure():
    with criterion(2, "closure check", 1.0) as notes:
        pairs = list(ex.admissible_pairs(12))
        for n, sigma in pairs:
            r = ex.verify_closure(n, sigma)
            assert r.ok, (n, sigma, r.failures)
            assert r.achieved == ex.main_threshold(n, sigma)
            assert r.upper is INF or r.kbroad <= r.upper
        notes.append(f"{len(pairs)} admissible pairs")


def test_criterion_3_necessity_algebra():
    with criterion(3, "necessity algebra", 1.0) as notes:
        checks = 0
        for n, sigma in ex.admissible_pairs(12):
            expo = ex.tensor_linear_exponent(n, sigma)
            t = ex.main_threshold(n, sigma)
            assert expo.nonpositive_from() == t
            assert expo(t) == 0 and expo(t - F(1, 1000)) > 0 > expo(t + F(1, 1000))
            checks += 1
        for n in range(2, 13):
            for k in range(1, n + 1):
                for ell in range(1, k + 1):
                    if n + k - ell <= 1:
                        continue
                    q = ex.multilinear_q(n, k, ell)
                    for d in range(1, n + 1):
                        left, right = ex.multilinear_sides(n, k, ell, d)
                        gap = left - right
                        assert gap(q) == 0
                        assert gap(q - F(1, 1000)) > 0 > gap(q + F(1, 1000))
                        checks += 1
        notes.append(f"{checks} thresholds")


def test_criterion_4_linear_algebra_fuzz():
    with criterion(4, "linear-algebra fuzz", 30.0) as notes:
        trials, configs, violations = 10**4, 0, 0
        for n, sigma in ex.admissible_pairs(6):
            for m in range(1, n + 1):
                rep = g.fuzz_campaign(n, sigma, m, trials, seed=1000 * n + 10 * sigma + m)
                assert len(rep.rows) == trials
                violations += rep.violations
                configs += 1
        assert violations == 0
        notes.append(f"{configs} configurations x {trials} trials, {violations} violations")


def test_criterion_5_exact_identities():
    with criterion(5, "exact identities", 10.0) as notes:
        rng = np.random.default_rng(5)
        worst_par = 0.0
        for sigma in (0, 2):
            Q = signature_matrix(3, sigma)
            ub, u = rng.uniform(-1, 1, (10**4, 2)), rng.uniform(-1, 1, (10**4, 2))
            delta = rng.uniform(0, 1, 10**4)
            worst_par = max(worst_par, D.parabolic_rescale_residual(Q, ub, delta, u))
        assert worst_par <= 1e-12
        worst_slab = 0.0
        for _ in range(10**4):
            h = D.QuadraticGraph.of(g.random_signature_form(3, int(rng.choice([0, 2])), rng),
                                    rng.uniform(-1, 1, 2), rng.uniform(-1, 1))
            rho = rng.uniform(0.01, 1)
            d = rng.uniform(0.01, 1) * rho
            worst_slab = max(worst_slab, D.rescaled_slab_residual(
                h, rng.uniform(-0.5, 0.5, 2), rho, rng.uniform(-0.5, 0.5, 2), d))
        assert worst_slab <= 1e-12
        worst_op = 0.0
        for n, sigma in ((2, 1), (3, 0), (3, 2)):
            Q = signature_matrix(n, sigma)
            f = SampledFunction.from_callable(
                lambda W: osc.radial_bump(W - 0.1, 0.5) * np.exp(4j * W[..., 0]), n - 1, 1 / 64)
            lam = 32.0
            axes = [grid_axis(-4, 4, 0.5)] * (n - 1) + [grid_axis(-8, 8, 2.0)]
            bare = osc.hormander(PhaseFamily.extension(Q), lam, f, axes, amplitude=None).values
            ext = osc.extension(Q, f, axes).values
            worst_op = max(worst_op, float(np.max(np.abs(bare - ext))))
        assert worst_op <= 1e-10
        notes.append(f"rescaling {worst_par:.1e}, slab {worst_slab:.1e}, operator {worst_op:.1e}")


def _smooth(dim, step, seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(-0.3, 0.3, dim)
    v = rng.uniform(-6, 6, dim)
    r = rng.uniform(0.3, 0.6)
    return SampledFunction.from_callable(
        lambda W: osc.radial_bump(W - c, r) * np.exp(2j * np.pi * W @ v), dim, step)


def _rel_error(d, f):
    rec = d.reconstruct(f)
    full = SampledFunction.zeros(f.dim, f.step, -np.ones(f.dim), np.ones(f.dim))
    full.accumulate(f)
    return np.sqrt(np.sum(np.abs(rec.values - full.values) ** 2) * f.cell) / f.l2_norm()


def test_criterion_6_wave_packets():
    with criterion(6, "wave packets", 120.0) as notes:
        for n, R, in_step, out_step in ((2, 256, 1 / 1024, 1 / 2048), (3, 64, 1 / 128, 1 / 512)):
            f = _smooth(n - 1, in_step, 11)
            d = wp.decompose(f, R)
            err, mass = _rel_error(d, f), d.mass_ratio()
            assert err <= 1e-6 and 0.25 <= mass <= 4
            s = wp.CAP_SPACING / np.sqrt(R)
            lat = wp.packet_lattice_step(R, wp.DEFAULT_DELTA)
            w0 = np.array([3 * s, -2 * s][: n - 1])
            v0 = np.array([2 * lat, -lat][: n - 1])
            Q = signature_matrix(n, n - 1)
            fld = osc.extension(Q, wp.make_packet(w0, v0, R, out_step), [grid_axis(-R, R, 1.0)] * n)
            tb = wp.tube(w0, PhaseFamily.extension(Q), None, R, v=v0)
            tube_frac = wp.tube_mass_fraction(fld, tb, 2.0)
            cap = wp.fourier_cap_mass(fld, Q.L, w0, 1 / np.sqrt(R), 4 / np.sqrt(R))
            assert tube_frac >= 0.99 and cap >= 0.99
            notes.append(f"(n,R)=({n},{R}): err {err:.1e}, mass ratio {mass:.2f}, "
                         f"tube {tube_frac:.4f}, cap {cap:.4f}")


def test_criterion_7_scaling_fits():
    with criterion(7, "scaling fits", 600.0) as notes:
        bundle = X.run_experiment(X.shipped_config("necessity-n3"))
        assert bundle.metadata["lambda_list"] == [64.0, 128.0, 256.0, 512.0]
        for name, fit in bundle.fits.items():
            notes.append(f"{name} {fit['slope']:.3f} ({fit['expected']})")
        assert bundle.passed, bundle.fits


def test_criterion_8_equidistribution():
    with criterion(8, "equidistribution dichotomy", 180.0) as notes:
        ell = X.equidistribution_demo("elliptic", 256.0)
        hyp = X.equidistribution_demo("hyperbolic", 256.0)
        assert ell.rhos == hyp.rhos and min(ell.rhos) == 1.0
        assert max(ell.ratios) <= 4
        assert hyp.thinnest >= 4 * ell.thinnest
        notes.append(f"elliptic max {max(ell.ratios):.2f}; hyperbolic {hyp.thinnest:.2f} = "
                     f"{hyp.thinnest / ell.thinnest:.2f} x elliptic at rho = 1")


def test_criterion_9_decoupling():
    with criterion(9, "decoupling scans", 600.0) as notes:
        R3 = Subspace(np.eye(3))
        V23 = Subspace.coordinate(3, [1, 2])
        cases = [(2, signature_matrix(3, 2), R3, F(4)), (0, pair_form(3), V23, F(4)),
                 (0, pair_form(3), R3, F(10, 3))]
        for sigma, Q, V, p in cases:
            sc = D.decoupling_scan(Q, V, p)
            bound = ex.dec_exponent(3, sigma, V.dim).value * (F(1, 2) - 1 / p)
            assert sc.bound_exponent == bound and sc.in_range
            assert sc.growth_exponent <= float(bound) + 0.1
            last = sc.rows[-1]
            assert last["extremal"] >= last["bound"] / 8
            notes.append(f"(sigma,d,p)=({sigma},{V.dim},{p}) growth {sc.growth_exponent:.3f} "
                         f"<= {float(bound):.3f}+0.1, extremal/bound {last['extremal'] / last['bound']:.2f}")
        leak = D.fourier_localization_leakage("extension:1,2", 2.0**10, 16, [0.3])
        assert leak <= 1e-3
        notes.append(f"leakage {leak:.1e}")
