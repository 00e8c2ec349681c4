import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sigos import oscillatory as osc
from sigos import wavepackets as wp
from sigos.errors import ParameterError
from sigos.geometry import Subspace, VarietyZ, signature_matrix
from sigos.oscillatory import PhaseFamily, SampledFunction, grid_axis


def lattice_packet(R, dim, i, j, step):
    s = wp.CAP_SPACING / np.sqrt(R)
    L = wp.packet_lattice_step(R, wp.DEFAULT_DELTA)
    w0 = np.array([3 * s, -2 * s][:dim])
    v0 = np.array([i * L, j * L][:dim])
    return w0, v0, wp.make_packet(w0, v0, R, step)


def smooth(dim, step, seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(-0.3, 0.3, dim)
    v = rng.uniform(-6, 6, dim)
    r = rng.uniform(0.3, 0.6)
    return SampledFunction.from_callable(
        lambda W: osc.radial_bump(W - c, r) * np.exp(2j * np.pi * W @ v), dim, step)


def rel_error(d, f):
    rec = d.reconstruct(f)
    full = SampledFunction.zeros(f.dim, f.step, -np.ones(f.dim), np.ones(f.dim))
    full.accumulate(f)
    return np.sqrt(np.sum(np.abs(rec.values - full.values) ** 2) * f.cell) / f.l2_norm()


def test_small_R_rejected():
    with pytest.raises(ParameterError):
        wp.decompose(smooth(1, 1 / 64, 0), 16)


def test_zero_input_has_no_packets():
    d = wp.decompose(SampledFunction.zeros(1, 1 / 256, [-0.5], [0.5]), 64)
    assert d.packets == [] and d.dropped_mass == 0


@pytest.mark.parametrize("R,dim,step", [(256, 1, 1 / 1024), (64, 2, 1 / 128)])
def test_reconstruction_and_orthogonality(R, dim, step):
    f = smooth(dim, step, 11)
    d = wp.decompose(f, R)
    assert rel_error(d, f) <= 1e-6
    assert 0.25 <= d.mass_ratio() <= 4
    assert d.dropped_mass <= 1e-12


def test_packets_support_and_order():
    f = smooth(1, 1 / 1024, 3)
    d = wp.decompose(f, 256)
    keys = [(p.theta_index, tuple(p.v)) for p in d.packets]
    assert keys == sorted(keys)
    for p in d.packets[::50]:
        c = p.coeff
        nodes = c.mesh()[np.abs(c.values) > 0]
        assert np.all(np.linalg.norm(nodes - p.theta_center, axis=-1) <= p.theta_radius + 1e-12)
        assert p.norm() == pytest.approx(c.l2_norm())


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([64, 256]))
def test_random_inputs_one_dim(seed, R):
    f = smooth(1, 1 / 1024, seed)
    d = wp.decompose(f, R)
    assert rel_error(d, f) <= 1e-6
    assert 0.25 <= d.mass_ratio() <= 4


@settings(max_examples=3, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_inputs_two_dim(seed):
    f = smooth(2, 1 / 128, seed)
    d = wp.decompose(f, 64)
    assert rel_error(d, f) <= 1e-6
    assert 0.25 <= d.mass_ratio() <= 4


@pytest.mark.parametrize("R,dim,step", [(256, 1, 1 / 1024), (64, 2, 1 / 128)])
def test_single_packet_localizes(R, dim, step):
    w0, v0, f = lattice_packet(R, dim, 2, -1, step)
    d = wp.decompose(f, R)
    L = wp.packet_lattice_step(R, wp.DEFAULT_DELTA)
    near = sum(p.mass for p in d.packets
               if np.linalg.norm(p.v - v0) <= 2 * L
               and np.linalg.norm(p.theta_center - w0) <= 2 / np.sqrt(R))
    assert near >= 0.9 * sum(p.mass for p in d.packets)


def packet_field(n, R, sigma, step):
    Q = signature_matrix(n, sigma)
    w0, v0, f = lattice_packet(R, n - 1, 2, -1, step)
    fld = osc.extension(Q, f, [grid_axis(-R, R, 1.0)] * n)
    return Q, w0, v0, fld


@pytest.mark.parametrize("n,R,sigma,step", [(2, 256, 1, 1 / 2048), (3, 64, 0, 1 / 512),
                                            (3, 64, 2, 1 / 512)])
def test_tube_mass_fraction(n, R, sigma, step):
    Q, w0, v0, fld = packet_field(n, R, sigma, step)
    tb = wp.tube(w0, PhaseFamily.extension(Q), None, R, v=v0)
    fr = [wp.tube_mass_fraction(fld, tb, k) for k in (0, 0.5, 1, 1.5, 2)]
    assert fr[0] == 0
    assert all(a <= b for a, b in zip(fr, fr[1:]))
    assert fr[-1] >= 0.99


@pytest.mark.parametrize("n,R,sigma,step", [(2, 256, 1, 1 / 2048), (3, 64, 0, 1 / 512)])
def test_fourier_cap_mass(n, R, sigma, step):
    Q, w0, _, fld = packet_field(n, R, sigma, step)
    assert wp.fourier_cap_mass(fld, Q.L, w0, 1 / np.sqrt(R), 4 / np.sqrt(R)) >= 0.99


def test_extension_tubes_are_straight():
    Q = signature_matrix(3, 0)
    tb = wp.tube([0.0, 0.0], PhaseFamily.extension(Q), None, 64, v=[3.0, -1.0])
    assert np.allclose(tb.samples[:, :2], [3.0, -1.0])
    tb = wp.tube([0.2, 0.1], PhaseFamily.extension(Q), None, 64, v=[0.0, 0.0])
    direction = np.diff(tb.samples, axis=0)
    direction /= direction[:, [-1]]
    assert np.allclose(direction[:, :2], -Q.L @ [0.2, 0.1])


def test_curved_core_residual_and_tangent():
    H = PhaseFamily.hd(3)
    lam, w = 2.0**8, np.array([0.3, -0.2])
    tb = wp.tube(w, H, lam, 64, v=np.array([5.0, 3.0]))
    assert tb.residual() <= 1e-8
    assert np.ptp(np.diff(tb.samples[:, 1])) > 1e-6  # x_2 bends quadratically
    t, eps = tb.samples[:, -1], 1e-4
    fwd = np.hstack([tb.core(t + eps), (t + eps)[:, None]])
    bwd = np.hstack([tb.core(t - eps), (t - eps)[:, None]])
    tan = (fwd - bwd) / np.linalg.norm(fwd - bwd, axis=1, keepdims=True)
    G = wp.gauss_direction(H, tb.samples, w, lam)
    assert np.max(np.linalg.norm(tan - G, axis=1)) <= 1e-6


def candidates(R, span=8):
    s = wp.CAP_SPACING / np.sqrt(R)
    return [(np.array([i * s, j * s]), np.zeros(2))
            for i in range(-span, span + 1) for j in range(-span, span + 1)]


@pytest.mark.parametrize("L,axis", [(np.eye(2), 0), ([[0, 1.0], [1, 0]], 1)])
def test_tangency_filter_selects_line(L, axis):
    R, dm = 256, wp.DEFAULT_DELTA_M
    V = Subspace.coordinate(3, [1, 2])
    keep = wp.tangency_filter(candidates(R), V, R, PhaseFamily.extension(np.asarray(L)))
    centers = np.array([p[0] for p in keep])
    assert len(keep) > 0
    assert np.max(np.abs(centers[:, axis])) <= 2 * R ** (-0.5 + dm)
    # the other coordinate ranges over the whole candidate set
    assert np.max(np.abs(centers[:, 1 - axis])) == pytest.approx(8 * wp.CAP_SPACING / np.sqrt(R))


def test_tangency_filter_empty_and_variety():
    V = Subspace.coordinate(3, [1, 2])
    assert wp.tangency_filter([], V, 64, PhaseFamily.extension(np.eye(2))) == []
    R, lam = 64, 64.0
    Z = VarietyZ(3, lam)
    keep = wp.tangency_filter(candidates(R, 4), Z, R, PhaseFamily.hd(3), lam)
    for p in keep:
        tb = wp.tube(p[0], PhaseFamily.hd(3), lam, R, v=p[1])
        assert np.max(Z.distance(tb.samples)) <= R ** (0.5 + wp.DEFAULT_DELTA_M)
