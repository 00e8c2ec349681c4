"""Slabs on graphs, parabolic rescaling and empirical decoupling constants.

Slab functions live on a periodic frequency lattice with spacing delta^{1/2}/2
in the first n-1 coordinates and delta/2 in the last, so every slab holds a
few lattice points in each direction.  L^p norms are torus averages, computed
by an inverse FFT on a grid twice as fine as the frequency box (exact for
p = 2 and p = 4, a Riemann sum otherwise).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction as F
from typing import Callable

import numpy as np
from scipy.fft import ifftn, next_fast_len
from scipy.spatial import cKDTree

from . import exponents as ex
from .errors import AcceptanceFailure, ParameterError
from .fits import PowerLawFit, power_law_fit
from .geometry import (GUARD_BAND, QuadraticForm, Subspace, horizontal_slice,
                       max_angle_to_horizontal, trial_rng)
from .oscillatory import PhaseFamily, SampledFunction, grid_axis, hormander, max_step, radial_bump
from .wavepackets import smooth_step

ANGLE_MIN = 1e-3  # required max angle between V and the horizontal hyperplane
MEMBER_TOL = 1e-9
OVERSAMPLE = 2
LOCALIZATION_EPS = 0.1
DEFAULT_DELTAS = tuple(2.0 ** -j for j in range(4, 9))


# ---------------------------------------------------------------- graphs

@dataclass(frozen=True)
class QuadraticGraph:
    """h(u) = <L u, u>/2 + <b, u> + a."""

    L: np.ndarray
    b: np.ndarray
    a: float = 0.0

    @classmethod
    def of(cls, Q, b=None, a: float = 0.0) -> "QuadraticGraph":
        L = Q.L if isinstance(Q, QuadraticForm) else np.asarray(Q, dtype=float)
        b = np.zeros(L.shape[0]) if b is None else np.asarray(b, dtype=float)
        return cls(L, b, float(a))

    @property
    def dim(self) -> int:
        return self.L.shape[0]

    @property
    def leading(self) -> QuadraticForm:
        return QuadraticForm.from_matrix(self.L)

    @property
    def sigma(self) -> int:
        return self.leading.sigma

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", u, self.L, u) + u @ self.b + self.a

    def grad(self, u) -> np.ndarray:
        return np.asarray(u, dtype=float) @ self.L.T + self.b


@dataclass(frozen=True)
class SmoothGraph:
    """A general graph function given by its values and gradient."""

    fn: Callable
    gradient: Callable
    dim: int
    sigma: int

    def __call__(self, u) -> np.ndarray:
        return self.fn(np.asarray(u, dtype=float))

    def grad(self, u) -> np.ndarray:
        return self.gradient(np.asarray(u, dtype=float))


def as_graph(h):
    if isinstance(h, QuadraticForm):
        return QuadraticGraph.of(h)
    if isinstance(h, (QuadraticGraph, SmoothGraph)):
        return h
    raise ParameterError("graph must be a QuadraticForm, QuadraticGraph or SmoothGraph")


def gauss_unit(h, u) -> np.ndarray:
    """Unit normal G_h(u) = (-grad h, 1)/|(-grad h, 1)|."""
    g = -np.atleast_2d(h.grad(u))
    G = np.concatenate([g, np.ones(g.shape[:-1] + (1,))], axis=-1)
    return G / np.linalg.norm(G, axis=-1, keepdims=True)


def angle_to(V: Subspace, vectors) -> np.ndarray:
    """Angle between each unit vector and the subspace V."""
    v = np.atleast_2d(vectors)
    off = v - (v @ V.basis) @ V.basis.T
    return np.arcsin(np.clip(np.linalg.norm(off, axis=-1), 0.0, 1.0))


# ---------------------------------------------------------------- slabs

def _dilation(n: int, delta: float) -> np.ndarray:
    return np.diag([np.sqrt(delta)] * (n - 1) + [delta])


def graph_matrix(h, u_bar) -> np.ndarray:
    """[h]_u = [[I, 0], [grad h(u)^T, 1]]."""
    g = np.asarray(h.grad(u_bar), dtype=float)
    n = g.size + 1
    M = np.eye(n)
    M[-1, :-1] = g
    return M


@dataclass(frozen=True)
class Slab:
    """theta(u; delta) = {[h]_{u,delta} eta + Gamma_h(u) : eta in [-1,1]^n}."""

    center: np.ndarray
    delta: float
    matrix: np.ndarray
    anchor: np.ndarray

    @property
    def n(self) -> int:
        return self.anchor.size

    def point(self, eta) -> np.ndarray:
        return np.asarray(eta, dtype=float) @ self.matrix.T + self.anchor

    def coords(self, xi) -> np.ndarray:
        """eta with xi = [h]_{u,delta} eta + Gamma_h(u), from the unit-triangular inverse."""
        d = np.asarray(xi, dtype=float) - self.anchor
        g = self.matrix[-1, :-1] / np.sqrt(self.delta)
        eta = np.empty_like(d)
        eta[..., :-1] = d[..., :-1] / np.sqrt(self.delta)
        eta[..., -1] = (d[..., -1] - d[..., :-1] @ g) / self.delta
        return eta

    def contains(self, xi, tol: float = MEMBER_TOL) -> np.ndarray:
        return np.all(np.abs(self.coords(xi)) <= 1.0 + tol, axis=-1)


def make_slab(h, u_bar, delta: float) -> Slab:
    h = as_graph(h)
    u_bar = np.asarray(u_bar, dtype=float)
    if delta <= 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    M = graph_matrix(h, u_bar) @ _dilation(u_bar.size + 1, delta)
    return Slab(u_bar, float(delta), M, np.append(u_bar, float(h(u_bar))))


def parabolic_rescale_residual(Q, u_bar, delta, u) -> float:
    """max |Gamma_h(u_bar + delta^{1/2} u) - [h]_{u_bar,delta} Gamma_Q(u) - Gamma_h(u_bar)|.

    Q is the leading quadratic part of h; for h = Q this is the plain identity.
    Arrays of (u_bar, delta, u) are handled elementwise.
    """
    h = as_graph(Q)
    Q0 = QuadraticGraph.of(h.L)
    u_bar = np.atleast_2d(np.asarray(u_bar, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    delta = np.broadcast_to(np.asarray(delta, dtype=float), u.shape[:-1])
    s = np.sqrt(delta)[..., None]
    lhs = np.concatenate([u_bar + s * u, h(u_bar + s * u)[..., None]], axis=-1)
    # [h]_{u_bar,delta} (u, Q(u)) = (s u, s <grad h(u_bar), u> + delta Q(u))
    top = s * u
    last = s[..., 0] * np.sum(h.grad(u_bar) * u, axis=-1) + delta * Q0(u)
    rhs = np.concatenate([top + u_bar, (last + h(u_bar))[..., None]], axis=-1)
    return float(np.max(np.abs(lhs - rhs)))


def rescaled_slab_residual(h: QuadraticGraph, u_alpha, rho: float, u_theta, delta: float) -> float:
    """Residual of [h]_alpha^{-1}[h]_theta = [Q]_theta~ and of the matching anchor identity."""
    h = as_graph(h)
    if not 0 < delta < rho:
        raise ParameterError("scales must satisfy 0 < delta < rho")
    alpha = make_slab(h, u_alpha, rho)
    theta = make_slab(h, u_theta, delta)
    u_t = (np.asarray(u_theta, dtype=float) - np.asarray(u_alpha, dtype=float)) / np.sqrt(rho)
    tilde = make_slab(QuadraticGraph.of(h.L), u_t, delta / rho)
    lhs_m = np.linalg.solve(alpha.matrix, theta.matrix)
    lhs_v = np.linalg.solve(alpha.matrix, theta.anchor - alpha.anchor)
    return float(max(np.max(np.abs(lhs_m - tilde.matrix)), np.max(np.abs(lhs_v - tilde.anchor))))


# ---------------------------------------------------------------- slab decompositions

@dataclass
class SlabDecomposition:
    h: object
    V: Subspace
    delta: float
    slabs: list
    overlap_count: int
    max_angle: float

    @property
    def centers(self) -> np.ndarray:
        return np.array([s.center for s in self.slabs]).reshape(len(self.slabs), -1)


def _check_angle(V: Subspace) -> None:
    if V.dim == 0 or max_angle_to_horizontal(V) < ANGLE_MIN:
        raise ParameterError(f"V violates the angle condition (max angle to e_n^perp < {ANGLE_MIN})")


def _lattice_ball(dim: int, step: float, radius: float = 1.0) -> np.ndarray:
    k = int(np.floor(radius / step + 1e-9))
    ax = step * np.arange(-k, k + 1)
    pts = np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    return pts[np.linalg.norm(pts, axis=1) <= radius + 1e-12]


def measure_overlap(slabs, samples_per_slab: int = 4, seed: int = 0, max_slabs: int = 1000) -> int:
    """Largest number of slabs containing a sampled slab point (points from at most max_slabs slabs)."""
    if len(slabs) <= 1:
        return len(slabs)
    rng = np.random.default_rng(seed)
    chosen = rng.permutation(len(slabs))[:max_slabs]
    n, delta = slabs[0].n, slabs[0].delta
    anchors = np.array([s.anchor for s in slabs])
    slopes = np.array([s.matrix[-1, :-1] for s in slabs]) / np.sqrt(delta)
    pts = np.concatenate([slabs[k].point(rng.uniform(-1, 1, (samples_per_slab, n))) for k in chosen])
    near = cKDTree(anchors[:, :-1]).query_ball_point(pts[:, :-1], np.sqrt(delta * (n - 1)) * (1 + 1e-9))
    rows = np.repeat(np.arange(len(pts)), [len(j) for j in near])
    cols = np.concatenate([np.asarray(j, dtype=int) for j in near])
    d = pts[rows] - anchors[cols]
    eta = np.empty_like(d)
    eta[:, :-1] = d[:, :-1] / np.sqrt(delta)
    eta[:, -1] = (d[:, -1] - np.sum(d[:, :-1] * slopes[cols], axis=1)) / delta
    inside = np.all(np.abs(eta) <= 1.0 + MEMBER_TOL, axis=1)
    return int(np.bincount(rows[inside], minlength=len(pts)).max())


def slab_decomposition(h, V: Subspace, delta: float, radius: float = 1.0) -> SlabDecomposition:
    """Slabs centred on the delta^{1/2}-lattice points u of B(0, radius) with angle(G_h(u), V) <= delta^{1/2}."""
    h = as_graph(h)
    _check_angle(V)
    if V.ambient != h.dim + 1:
        raise ParameterError("V must live in R^n with n - 1 the graph dimension")
    s = np.sqrt(delta)
    cand = _lattice_ball(h.dim, s, radius)
    ang = angle_to(V, gauss_unit(h, cand))
    keep = ang <= s * (1 + 1e-12)
    cand, ang = cand[keep], ang[keep]
    if delta >= 1 and len(cand) > 1:
        best = int(np.argmin(ang))
        cand, ang = cand[best: best + 1], ang[best: best + 1]
    slabs = [make_slab(h, u, delta) for u in cand]
    overlap = measure_overlap(slabs)
    if overlap > 2 ** V.ambient:
        raise AcceptanceFailure(f"slab overlap {overlap} exceeds 2^n = {2 ** V.ambient}")
    return SlabDecomposition(h, V, float(delta), slabs, overlap,
                             float(np.max(ang, initial=0.0)))


# ---------------------------------------------------------------- slab functions

def torus_spacing(n: int, delta: float) -> np.ndarray:
    return np.array([np.sqrt(delta) / 2] * (n - 1) + [delta / 2])


@dataclass
class SlabFunction:
    """F(x) = sum_k c_k exp(2 pi i <idx_k * spacing, x>) with every frequency in `slab`."""

    slab: Slab | None
    idx: np.ndarray
    coeffs: np.ndarray
    spacing: np.ndarray

    @property
    def freqs(self) -> np.ndarray:
        return self.idx * self.spacing

    def restrict(self, mask) -> "SlabFunction":
        return SlabFunction(self.slab, self.idx[mask], self.coeffs[mask], self.spacing)


def slab_lattice(slab: Slab, spacing) -> np.ndarray:
    """Integer indices k with k * spacing in the slab."""
    spacing = np.asarray(spacing, dtype=float)
    s = np.sqrt(slab.delta)
    u = slab.center
    lo = np.ceil((u - s) / spacing[:-1] - MEMBER_TOL).astype(int)
    hi = np.floor((u + s) / spacing[:-1] + MEMBER_TOL).astype(int)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    hor = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    g = slab.matrix[-1, :-1] / s
    mid = slab.anchor[-1] + (hor * spacing[:-1] - u) @ g
    vlo = np.ceil((mid - slab.delta) / spacing[-1] - MEMBER_TOL).astype(int)
    vhi = np.floor((mid + slab.delta) / spacing[-1] + MEMBER_TOL).astype(int)
    counts = np.maximum(vhi - vlo + 1, 0)
    rows = np.repeat(hor, counts, axis=0)
    vert = np.concatenate([np.arange(a, b + 1) for a, b in zip(vlo, vhi)]) if counts.sum() else \
        np.zeros(0, dtype=int)
    idx = np.concatenate([rows, vert[:, None]], axis=1)
    return idx[slab.contains(idx * spacing)]


def nearest_in_slab(slab: Slab, spacing) -> np.ndarray:
    """The lattice point of the slab closest to its anchor."""
    idx = slab_lattice(slab, spacing)
    if len(idx) == 0:
        raise ParameterError("slab contains no lattice point")
    d = np.linalg.norm(idx * spacing - slab.anchor, axis=1)
    return idx[int(np.argmin(d))]


def random_slab_functions(dec: SlabDecomposition, rng, lattices=None) -> list:
    """Complex Gaussian coefficients on every in-slab lattice point."""
    sp = torus_spacing(dec.V.ambient, dec.delta)
    lattices = lattices or [slab_lattice(s, sp) for s in dec.slabs]
    out = []
    for s, idx in zip(dec.slabs, lattices):
        c = rng.standard_normal(len(idx)) + 1j * rng.standard_normal(len(idx))
        out.append(SlabFunction(s, idx, c, sp))
    return out


def extremal_slab_functions(dec: SlabDecomposition) -> list:
    """One frequency per slab (nearest to the anchor), coefficient 1."""
    sp = torus_spacing(dec.V.ambient, dec.delta)
    return [SlabFunction(s, nearest_in_slab(s, sp)[None, :], np.ones(1, dtype=complex), sp)
            for s in dec.slabs]


def _grid(idx_sets):
    lo = np.min([i.min(axis=0) for i in idx_sets if len(i)], axis=0)
    hi = np.max([i.max(axis=0) for i in idx_sets if len(i)], axis=0)
    shape = tuple(next_fast_len(int(OVERSAMPLE * (b - a + 1))) for a, b in zip(lo, hi))
    return lo, shape


def _values(fn: SlabFunction, lo, shape) -> np.ndarray:
    arr = np.zeros(shape, dtype=complex)
    np.add.at(arr, tuple((fn.idx - lo).T), fn.coeffs)
    return ifftn(arr, overwrite_x=True) * arr.size


def _mean_norm(values, p) -> float:
    a = np.abs(values)
    if p == np.inf:
        return float(a.max())
    return float(np.mean(a ** float(p)) ** (1.0 / float(p)))


def lp_torus(fn: SlabFunction, p) -> float:
    """Torus-averaged L^p norm of one slab function."""
    if len(fn.idx) == 0:
        return 0.0
    lo, shape = _grid([fn.idx])
    return _mean_norm(_values(fn, lo, shape), p)


def _check_p(p) -> None:
    if not (p == np.inf or float(p) >= 1):
        raise ParameterError(f"p must lie in [1, inf], got {p}")


def decoupling_ratio(slab_functions, p) -> float:
    """||sum F_theta||_p / (sum ||F_theta||_p^p)^{1/p}; p = inf uses max norms."""
    _check_p(p)
    fns = [f for f in slab_functions if len(f.idx)]
    if not fns:
        raise ParameterError("need at least one non-empty slab function")
    if len(fns) == 1:
        return 1.0
    parts = np.array([lp_torus(f, p) for f in fns])
    rhs = parts.max() if p == np.inf else float(np.sum(parts ** float(p)) ** (1.0 / float(p)))
    lo, shape = _grid([f.idx for f in fns])
    arr = np.zeros(shape, dtype=complex)
    for f in fns:
        np.add.at(arr, tuple((f.idx - lo).T), f.coeffs)
    total = ifftn(arr, overwrite_x=True) * arr.size
    return _mean_norm(total, p) / rhs


# ---------------------------------------------------------------- scans

def _as_fraction(p):
    if p == np.inf:
        return None
    return F(str(p)).limit_denominator(10**6) if not isinstance(p, F) else p


@dataclass
class DecouplingScan:
    fit: PowerLawFit  # slope = growth exponent of the largest ratio in 1/delta
    rows: list
    bound_exponent: F | None  # e(n,sigma,d)(1/2 - 1/p)
    in_range: bool
    tags: list = field(default_factory=list)

    @property
    def growth_exponent(self) -> float:
        return self.fit.slope


def decoupling_scan(h, V: Subspace, p, delta_list=DEFAULT_DELTAS, trials: int = 3,
                    seed: int = 0, extremal: bool = True) -> DecouplingScan:
    """Largest decoupling ratio over seeded random tuples (and the extremal tuple) per delta."""
    h = as_graph(h)
    _check_p(p)
    n, d, sigma = V.ambient, V.dim, h.sigma
    pdec = ex.dec_range(n, sigma, d)
    pf = _as_fraction(p)
    in_range = 2 <= float(p) and (pdec == ex.INF or (pf is not None and pf <= pdec))
    tags = []
    if not in_range:
        warnings.warn(f"p = {p} lies outside [2, p_dec = {pdec}]", stacklevel=2)
        tags.append("outside proven range")
    e = ex.dec_exponent(n, sigma, d).value
    bexp = e * (F(1, 2) - 1 / pf) if pf is not None else e / 2
    rows = []
    for delta in delta_list:
        dec = slab_decomposition(h, V, delta)
        sp = torus_spacing(n, delta)
        lattices = [slab_lattice(s, sp) for s in dec.slabs]
        rand = [decoupling_ratio(random_slab_functions(dec, trial_rng(seed, i), lattices), p)
                for i in range(trials)]
        ext = decoupling_ratio(extremal_slab_functions(dec), p) if extremal else 0.0
        rows.append({
            "delta": delta, "slabs": len(dec.slabs), "overlap": dec.overlap_count,
            "random_max": max(rand, default=0.0), "extremal": ext,
            "ratio": max(rand + [ext]), "bound": float(delta) ** (-float(bexp)),
        })
    fit = power_law_fit([(1 / r["delta"], r["ratio"]) for r in rows])
    return DecouplingScan(fit, rows, bexp, in_range, tags)


# ---------------------------------------------------------------- flat directions

@dataclass
class FlatSplit:
    nu: int
    E0: np.ndarray  # (n-1) x nu orthonormal basis of the flat directions
    groups: dict  # key -> list of SlabFunction pieces

    @property
    def count(self) -> int:
        return len(self.groups)


def gauss_preimage_direction(L, V: Subspace) -> Subspace:
    """V_u = {u : (-L u, 0) in V}, the direction of {u : G_Q(u) in V}."""
    _check_angle(V)
    V_sl = horizontal_slice(V)
    return Subspace.span(np.linalg.solve(L, V_sl.basis), V.ambient - 1)


def flat_directions(L, V: Subspace) -> np.ndarray:
    """Eigenvectors of the form restricted to V_u with |eigenvalue| < rho(L)."""
    L = np.asarray(L, dtype=float)
    U = gauss_preimage_direction(L, V)
    rho = float(np.min(np.abs(np.linalg.eigvalsh(L))))
    if U.dim == 0:
        return np.zeros((L.shape[0], 0))
    w, vecs = np.linalg.eigh(U.basis.T @ L @ U.basis)
    return U.basis @ vecs[:, np.abs(w) < rho - GUARD_BAND]


def flat_direction_split(F_list, V: Subspace, Q, delta: float) -> FlatSplit:
    """Partition each F_theta by the delta^{1/2}-cell of its frequencies along E_0."""
    L = Q.L if isinstance(Q, (QuadraticForm, QuadraticGraph)) else np.asarray(Q, dtype=float)
    E0 = flat_directions(L, V)
    groups: dict = {}
    s = np.sqrt(delta)
    for fn in F_list:
        keys = np.floor(fn.freqs[:, :-1] @ E0 / s).astype(int)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        for j, key in enumerate(map(tuple, uniq)):
            groups.setdefault(key, []).append(fn.restrict(inv.ravel() == j))
    return FlatSplit(E0.shape[1], E0, groups)


def square_function_terms(fn: SlabFunction, pieces, p) -> tuple[float, float, float]:
    """(sum_a ||F_a||_p^p)^{1/p}, ||(sum_a |F_a|^2)^{1/2}||_p and ||F||_p on one grid."""
    lo, shape = _grid([fn.idx])
    vals = [_values(q, lo, shape) for q in pieces if len(q.idx)]
    left = float(np.sum([_mean_norm(v, p) ** p for v in vals]) ** (1 / p))
    middle = _mean_norm(np.sqrt(np.sum([np.abs(v) ** 2 for v in vals], axis=0)), p)
    return left, middle, _mean_norm(_values(fn, lo, shape), p)


# ---------------------------------------------------------------- Fourier localization

def localization_cutoff(x) -> np.ndarray:
    """zeta: 1 on [-1,1]^n, 0 outside [-2,2]^n, a product of smooth steps."""
    return np.prod(smooth_step(2.0 - np.abs(np.asarray(x, dtype=float))), axis=-1)


def _dyadic_at_most(x: float) -> float:
    return 2.0 ** np.floor(np.log2(x))


def fourier_localization_leakage(phase, lam: float, K: float, tau_center, x_bar=None,
                                 eps: float = LOCALIZATION_EPS, step: float = 0.5, f=None) -> float:
    """Fraction of the squared DFT mass of T^lam_{B_{K^2}} f_tau outside the slab theta(tau).

    f_tau = f psi(K |w - w_tau|) with f = 1 by default; theta(tau) = theta(w_tau; K^{-2(1-eps)})
    on the graph of h(u) = <A'(x_bar_n/lam) u, u>/2.
    """
    phase = PhaseFamily.parse(phase) if isinstance(phase, str) else phase
    n = phase.n
    if K < 8 or K * K > lam:
        raise ParameterError(f"need K >= 8 and K^2 <= lambda, got K = {K}, lambda = {lam}")
    w_tau = np.atleast_1d(np.asarray(tau_center, dtype=float))
    x_bar = np.zeros(n) if x_bar is None else np.asarray(x_bar, dtype=float)
    if w_tau.size != n - 1 or x_bar.size != n:
        raise ParameterError("tau centre and x_bar have the wrong dimensions")
    side = 2.0 * K * K
    reach = float(np.linalg.norm(np.abs(x_bar) + side))
    wstep = _dyadic_at_most(max_step(reach))
    r = 1.0 / K
    fn = (lambda W: radial_bump(W - w_tau, r)) if f is None else \
        (lambda W: f(W) * radial_bump(W - w_tau, r))
    f_tau = SampledFunction.from_callable(fn, n - 1, wstep, w_tau - r, w_tau + r)
    if not np.any(f_tau.values):
        return 0.0
    axes = [grid_axis(c - side, c + side - step, step) for c in x_bar]
    fld = hormander(phase, lam, f_tau, axes)
    rel = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1) - x_bar
    vals = fld.values * localization_cutoff(rel / (K * K))
    power = np.abs(np.fft.fftn(vals)) ** 2
    total = power.sum()
    if total == 0:
        return 0.0
    freqs = np.stack(np.meshgrid(*[np.fft.fftfreq(len(a), step) for a in axes], indexing="ij"),
                     axis=-1)
    h = QuadraticGraph.of(phase.A_prime(x_bar[-1] / lam))
    slab = make_slab(h, w_tau, float(K) ** (-2 * (1 - eps)))
    inside = slab.contains(freqs)
    return float(power[~inside].sum() / total)
