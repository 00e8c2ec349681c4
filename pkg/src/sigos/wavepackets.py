"""Scale-R wave packets: decomposition, tubes and tangency tests.

Each cap theta carries psi_theta f on a local window of width 4 R^{-1/2}.
On that window the discrete Fourier pair is exact, so splitting the spatial
side with a partition of unity {eta_v} and multiplying back by the cap
enlargement psi~_theta (equal to 1 on supp psi_theta) reconstructs f up to
rounding and the dropped packets.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ParameterError
from .geometry import Subspace, VarietyZ
from .oscillatory import Field, PhaseFamily, SampledFunction, bump

CAP_SPACING = 0.75  # cap centres on a lattice of spacing CAP_SPACING * R^{-1/2}
CAP_SUPPORT = 0.75  # psi_theta is supported in radius CAP_SUPPORT * R^{-1/2}
CAP_FLAT = 0.8  # psi~_theta = 1 on radius CAP_FLAT * R^{-1/2}, 0 beyond R^{-1/2}
DROP_TOL = 1e-12
DEFAULT_DELTA = 0.05
DEFAULT_DELTA_M = 0.2


def smooth_step(s) -> np.ndarray:
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def cap_enlargement(r) -> np.ndarray:
    """psi~ as a function of r = R^{1/2} |w - w_theta|."""
    return smooth_step((1.0 - np.asarray(r)) / (1.0 - CAP_FLAT))


class _CapTransform:
    """Shared per-cap data: G = DFT of the windowed psi_theta f and the output box."""

    def __init__(self, G, enlarge, box, origin, patches, step):
        self.G, self.enlarge, self.box, self.origin = G, enlarge, box, origin
        self.patches, self.step = patches, step

    def _synth(self, weights_list):
        dim = self.G.ndim
        eG = np.zeros((len(weights_list),) + self.G.shape, dtype=complex)
        for j, parts in enumerate(weights_list):
            for key in parts:
                sl, e = self.patches[key]
                eG[(j,) + sl] += e * self.G[sl]
        axes = tuple(range(1, dim + 1))
        out = np.fft.fftn(np.fft.ifftshift(eG, axes=axes), axes=axes)
        return out[(slice(None),) + self.box] * self.enlarge

    def pieces(self, keys) -> list[SampledFunction]:
        vals = self._synth([[k] for k in keys])
        return [SampledFunction(self.G.ndim, self.step, self.origin, v) for v in vals]

    def summed(self, keys) -> SampledFunction:
        return SampledFunction(self.G.ndim, self.step, self.origin, self._synth([list(keys)])[0])


@dataclass(eq=False)
class WavePacket:
    theta_index: tuple
    theta_center: np.ndarray
    theta_radius: float
    v: np.ndarray
    mass: float  # ||f_{theta,v}||_2^2
    source: tuple = field(default=None, repr=False)  # (cap transform, patch key)

    @property
    def key(self):
        return (self.theta_index, tuple(np.round(self.v, 9)))

    @property
    def coeff(self) -> SampledFunction:
        """The coefficient function f_{theta,v}, synthesised on demand."""
        cap, k = self.source
        return cap.pieces([k])[0]

    def norm(self) -> float:
        return float(np.sqrt(self.mass))


@dataclass
class Decomposition:
    packets: list
    R: float
    delta: float
    dropped_mass: float  # sum of squared norms of dropped packets over ||f||^2
    input_norm: float
    meta: dict = field(default_factory=dict)

    def reconstruct(self, like: SampledFunction) -> SampledFunction:
        out = SampledFunction.zeros(like.dim, like.step, -np.ones(like.dim), np.ones(like.dim))
        groups = {}
        for p in self.packets:
            cap, k = p.source
            groups.setdefault(id(cap), (cap, []))[1].append(k)
        for cap, keys in groups.values():
            out.accumulate(cap.summed(keys))
        return out

    def mass_ratio(self) -> float:
        return sum(p.mass for p in self.packets) / self.input_norm**2


def packet_lattice_step(R: float, delta: float) -> float:
    return R ** ((1 + delta) / 2)


def cap_centers(R: float, dim: int, lo=None, hi=None) -> tuple[np.ndarray, np.ndarray]:
    """Integer indices and centres of the caps whose supports meet the box [lo, hi]."""
    s = CAP_SPACING / np.sqrt(R)
    reach = CAP_SUPPORT / np.sqrt(R)
    lo = -np.ones(dim) if lo is None else np.asarray(lo, dtype=float)
    hi = np.ones(dim) if hi is None else np.asarray(hi, dtype=float)
    ranges = [range(int(np.floor((a - reach) / s)), int(np.ceil((b + reach) / s)) + 1)
              for a, b in zip(lo, hi)]
    idx = np.array(list(itertools.product(*ranges)), dtype=int)
    return idx, idx * s


def _partition_denominator(W, R):
    """sum over all caps of psi(|w - c| / (CAP_SUPPORT R^{-1/2})) on the points W."""
    s = CAP_SPACING / np.sqrt(R)
    r = CAP_SUPPORT / np.sqrt(R)
    base = np.floor(W / s).astype(int)
    span = int(np.ceil(r / s)) + 1
    total = np.zeros(W.shape[:-1])
    for off in itertools.product(range(-span, span + 1), repeat=W.shape[-1]):
        c = (base + np.array(off)) * s
        total += bump(np.linalg.norm(W - c, axis=-1) / r)
    return total


def decompose(f: SampledFunction, R: float, delta: float = DEFAULT_DELTA,
              drop_tol: float = DROP_TOL) -> Decomposition:
    """Split f into packets f_{theta,v} at scale R (packets of norm < drop_tol ||f|| dropped)."""
    if R < 64:
        raise ParameterError(f"R must be at least 64, got {R}")
    dim, h = f.dim, f.step
    fnorm = f.l2_norm()
    if fnorm == 0:
        return Decomposition([], R, delta, 0.0, 0.0)
    rr = 1.0 / np.sqrt(R)
    L = packet_lattice_step(R, delta)
    half = int(np.ceil(2 * rr / h))
    M = 2 * half + 1
    # spatial grid of the window transform, in sorted order: z_k = k / (M h)
    dz = 1.0 / (M * h)
    z = (np.arange(M) - half) * dz
    Z = np.stack(np.meshgrid(*([z] * dim), indexing="ij"), axis=-1)
    vrange = np.arange(int(np.floor(z[0] / L)) - 1, int(np.ceil(z[-1] / L)) + 2)
    eta_den = np.zeros(Z.shape[:-1])
    patches = {}
    for vi in itertools.product(vrange, repeat=dim):
        v = np.array(vi) * L
        sl = tuple(slice(max(0, int(np.floor((c - L - z[0]) / dz))),
                         min(M, int(np.ceil((c + L - z[0]) / dz)) + 1)) for c in v)
        if any(s.start >= s.stop for s in sl):
            continue
        e = bump(np.linalg.norm(Z[sl] - v, axis=-1) / L)
        if not np.any(e):
            continue
        eta_den[sl] += e
        patches[vi] = (sl, e)
    for vi, (sl, e) in patches.items():
        patches[vi] = (sl, e / np.where(eta_den[sl] > 0, eta_den[sl], 1.0))

    f_hi = f.origin + h * (np.array(f.values.shape) - 1)
    idx, centers = cap_centers(R, dim, f.origin, f_hi)
    # partition-of-unity denominator on every lattice node any window can touch
    den_start = np.round((f.origin + 1) / h).astype(int) - M
    den_axes = [-1 + h * (den_start[ax] + np.arange(f.values.shape[ax] + 2 * M)) for ax in range(dim)]
    den = _partition_denominator(np.stack(np.meshgrid(*den_axes, indexing="ij"), axis=-1), R)
    keys = list(patches)
    packets, dropped = [], 0.0
    for ti, c in zip(idx, centers):
        # window: the lattice node nearest c, plus or minus `half` nodes
        start = np.round((c + 1) / h).astype(int) - half
        W = -1 + h * (start[None, :] + np.arange(M)[:, None])  # per-axis node coordinates
        Wm = np.stack(np.meshgrid(*W.T, indexing="ij"), axis=-1)
        g = _window_values(f, start, M)
        if not np.any(g):
            continue
        rel = tuple(slice(a - b, a - b + M) for a, b in zip(start, den_start))
        g = g * _cap_weight(Wm, c, R, den[rel])
        if not np.any(g):
            continue
        # G_k = (1/M^d) sum_j g_j e^{2 pi i k j / M}, reordered so index half is z = 0
        G = np.fft.fftshift(np.fft.ifftn(g))
        G2 = np.abs(G) ** 2
        enlarge = cap_enlargement(np.linalg.norm(Wm - c, axis=-1) / rr)
        enlarge = enlarge * np.all((Wm >= -1 - 1e-12) & (Wm <= 1 + 1e-12), axis=-1)
        nz = np.nonzero(enlarge)
        box = tuple(slice(a.min(), a.max() + 1) for a in nz)
        origin = np.array([W[b.start, ax] for ax, b in enumerate(box)])
        # Parseval bound: ||f_{theta,v}||^2 <= (h M)^d sum |eta_v G|^2
        bounds = np.array([np.sum(patches[k][1] ** 2 * G2[patches[k][0]]) for k in keys])
        # drop the smallest candidates while their total stays within the cap's budget
        order = np.argsort(bounds, kind="stable")
        budget = drop_tol * float(np.sum(np.abs(g) ** 2)) * h**dim / (h * M) ** dim
        cut = int(np.searchsorted(np.cumsum(bounds[order]), budget, side="right"))
        small = np.zeros(len(keys), dtype=bool)
        small[order[:cut]] = True
        dropped += float(np.sum(bounds[small])) * (h * M) ** dim
        live = [k for k, s in zip(keys, small) if not s]
        cap = _CapTransform(G, enlarge[box], box, origin, patches, h)
        for s0 in range(0, len(live), 64):
            chunk = live[s0: s0 + 64]
            for k, piece in zip(chunk, cap.pieces(chunk)):
                packets.append(WavePacket(tuple(int(t) for t in ti), c, rr, np.array(k) * L,
                                          piece.l2_norm() ** 2, (cap, k)))
    packets.sort(key=lambda p: (p.theta_index, tuple(p.v)))
    meta = {"R": R, "delta": delta, "cap_spacing": CAP_SPACING, "cap_support": CAP_SUPPORT,
            "cap_flat": CAP_FLAT, "lattice_step": L, "drop_tol": drop_tol, "window": M}
    return Decomposition(packets, R, delta, dropped / fnorm**2, fnorm, meta)


def _window_values(f: SampledFunction, start, M):
    """Values of f on the M^dim lattice window starting at global node `start` (zero outside)."""
    dim = f.dim
    off = np.round((f.origin + 1) / f.step).astype(int)
    out = np.zeros((M,) * dim, dtype=complex)
    src, dst = [], []
    for ax in range(dim):
        a = max(start[ax], off[ax])
        b = min(start[ax] + M, off[ax] + f.values.shape[ax])
        if b <= a:
            return out
        src.append(slice(a - off[ax], b - off[ax]))
        dst.append(slice(a - start[ax], b - start[ax]))
    out[tuple(dst)] = f.values[tuple(src)]
    return out


def _cap_weight(Wm, c, R, den):
    """psi_theta on the window: the normalised partition-of-unity weight of cap c."""
    r = CAP_SUPPORT / np.sqrt(R)
    num = bump(np.linalg.norm(Wm - c, axis=-1) / r)
    return np.where(num > 0, num / np.where(den > 0, den, 1.0), 0.0)


def make_packet(omega0, v0, R: float, step: float, delta: float = DEFAULT_DELTA) -> SampledFunction:
    """The model input e^{-2 pi i <v0, w>} psi(R^{1/2}(w - w0)) on the lattice of `step`."""
    omega0 = np.asarray(omega0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    rr = 1.0 / np.sqrt(R)
    return SampledFunction.from_callable(
        lambda W: bump(np.linalg.norm(W - omega0, axis=-1) / rr) * np.exp(-2j * np.pi * W @ v0),
        len(omega0), step, omega0 - rr, omega0 + rr,
    )


# ---------------------------------------------------------------- tubes

@dataclass
class Tube:
    theta_center: np.ndarray
    v: np.ndarray
    radius: float
    t_range: tuple
    phase: PhaseFamily
    lam: float | None
    samples: np.ndarray = None  # (T, n) points of the core

    def core(self, t) -> np.ndarray:
        """gamma(t) = v - lam A(t/lam) w_theta (A(t) w_theta when lam is None)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        c = self.phase.scaled_weights(t, self.lam)
        Aw = np.stack([C @ self.theta_center for C in self.phase.coeffs])
        return self.v[None, :] - c @ Aw

    def residual(self) -> float:
        """max |d_w phi(Gamma(t); w_theta) - v| over the stored samples."""
        x = self.samples
        c = self.phase.scaled_weights(x[:, -1], self.lam)
        Aw = np.stack([C @ self.theta_center for C in self.phase.coeffs])
        grad = x[:, :-1] + c @ Aw
        return float(np.max(np.linalg.norm(grad - self.v, axis=1)))

    def distance(self, x) -> np.ndarray:
        """|x' - gamma(x_n)| for points x (..., n)."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        d = np.linalg.norm(flat[:, :-1] - self.core(flat[:, -1]), axis=1)
        return d.reshape(x.shape[:-1])


def tube(packet_or_center, phase: PhaseFamily, lam: float | None, R: float,
         delta: float = DEFAULT_DELTA, v=None, samples: int = 65) -> Tube:
    """Tube T_{theta,v} with core {d_w phi^lam(x; w_theta) = v}, solved in closed form."""
    if isinstance(packet_or_center, WavePacket):
        center, v = packet_or_center.theta_center, packet_or_center.v
    else:
        center = np.asarray(packet_or_center, dtype=float)
        v = np.asarray(v, dtype=float)
    t = np.linspace(-R, R, samples)
    tb = Tube(np.asarray(center, float), np.asarray(v, float), R ** (0.5 + delta), (-R, R),
              phase, lam)
    tb.samples = np.hstack([tb.core(t), t[:, None]])
    return tb


def gauss_direction(phase: PhaseFamily, x, omega, lam: float | None = None) -> np.ndarray:
    """Unit kernel direction of d2_{w x} phi^lam: (-A'(x_n/lam) w, 1) normalised."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    omega = np.asarray(omega, dtype=float)
    t = x[:, -1] / (lam if lam else 1.0)
    g = np.stack([np.append(-phase.A_prime(s) @ omega, 1.0) for s in t])
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def tube_mass_fraction(fld: Field, tb: Tube, dilate: float, R: float | None = None) -> float:
    """Share of sum |F|^2 over grid points of B(0,R) lying strictly inside dilate * T."""
    X = fld.mesh()
    R = tb.t_range[1] if R is None else R
    ball = np.linalg.norm(X, axis=-1) <= R
    w = np.abs(fld.values) ** 2 * ball
    total = w.sum()
    if total == 0:
        return 0.0
    inside = tb.distance(X) < dilate * tb.radius
    return float((w * inside).sum() / total)


def fourier_cap_mass(fld: Field, L, omega_center, cap_radius: float, margin: float,
                     window: bool = True) -> float:
    """Share of the discrete Fourier mass of a windowed field within `margin` of the cap.

    The cap is {(w, Q(w)) : |w - omega_center| <= cap_radius} with Q(w) = <L w, w>/2,
    sampled at spacing margin/8 so the distance is exact to within that spacing.
    """
    vals = fld.values
    if window:
        for ax, a in enumerate(fld.axes):
            half = 0.5 * (a[-1] - a[0])
            mid = 0.5 * (a[-1] + a[0])
            shape = [1] * vals.ndim
            shape[ax] = -1
            vals = vals * bump((a - mid) / (half * 1.0001)).reshape(shape)
    spec = (np.abs(np.fft.fftn(vals)) ** 2).ravel()
    freqs = [np.fft.fftfreq(len(a), d=(a[1] - a[0])) for a in fld.axes]
    dim = len(freqs) - 1
    L = np.asarray(L, dtype=float).reshape(dim, dim)
    g = np.arange(-cap_radius, cap_radius + 1e-12, margin / 8)
    pts = np.stack(np.meshgrid(*([g] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    pts = pts[np.linalg.norm(pts, axis=1) <= cap_radius] + np.asarray(omega_center, dtype=float)
    cap = np.hstack([pts, 0.5 * np.einsum("mi,ij,mj->m", pts, L, pts)[:, None]])
    Xi = np.stack(np.meshgrid(*freqs, indexing="ij"), axis=-1).reshape(-1, len(freqs))
    d, _ = cKDTree(cap).query(Xi, distance_upper_bound=margin * 1.01)
    return float(spec[d <= margin].sum() / spec.sum())


# ---------------------------------------------------------------- tangency

def _normal_projection_target(target, x):
    """Distance of points x to the target."""
    if isinstance(target, Subspace):
        P = np.eye(target.ambient) - target.projector()
        return np.linalg.norm(x @ P.T, axis=-1)
    return target.distance(x)


def _angle_to_target(target, x, g):
    """Angle between unit vector g and the target's tangent space at (near) x."""
    if isinstance(target, Subspace):
        return float(np.arcsin(np.clip(np.linalg.norm(g - target.projector() @ g), 0, 1)))
    Z: VarietyZ = target
    d = Z.d
    rows = []
    for j in range(Z.equations):
        r = np.zeros(d)
        r[2 * j] = x[d - 1]
        r[2 * j + 1] = -Z.lam
        r[d - 1] = x[2 * j]
        rows.append(r)
    if not rows:
        return 0.0
    N = Subspace.span(np.array(rows).T, d)
    return float(np.arcsin(np.clip(np.linalg.norm(N.projector() @ g), 0, 1)))


def tangency_filter(packets, target, R: float, phase: PhaseFamily, lam: float | None = None,
                    delta: float = DEFAULT_DELTA, delta_m: float = DEFAULT_DELTA_M,
                    c_tang: float = 1.0, samples: int = 33) -> list:
    """Packets whose tubes lie in N_{R^{1/2+delta_m}}(target) and meet it at small angle."""
    keep = []
    width = R ** (0.5 + delta_m)
    tol = c_tang * R ** (-0.5 + delta_m)
    for p in packets:
        center = p.theta_center if isinstance(p, WavePacket) else np.asarray(p[0], dtype=float)
        v = p.v if isinstance(p, WavePacket) else np.asarray(p[1], dtype=float)
        tb = tube(center, phase, lam, R, delta, v=v, samples=samples)
        pts = tb.samples[np.linalg.norm(tb.samples, axis=1) <= R]
        if len(pts) == 0:
            continue
        if np.max(_normal_projection_target(target, pts)) > width:
            continue
        G = gauss_direction(phase, pts, center, lam)
        if max(_angle_to_target(target, x, gv) for x, gv in zip(pts, G)) > tol:
            continue
        keep.append(p)
    return keep
