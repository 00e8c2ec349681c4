"""Sharp examples with their predicted lambda-exponents.

Multilinear side: the hyperbolic tuple h_j (slabs of thickness 1/lambda along a
line in the hyperbolic paraboloid), the elliptic tuple g_j (lambda^{-1/2} caps
modulated onto a slab of parallel tubes) and their tensor products.

Linear side: the Bourgain input for H_d, a deterministic surrogate for the
Bourgain-Guth input for E_d, and their tensor product for A_{n,sigma}.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction as F
from math import gamma

import numpy as np

from . import exponents as ex
from .errors import ParameterError
from .geometry import VarietyZ
from .oscillatory import PhaseFamily, SampledFunction, evaluate_points, grid_axis, hormander
from .oscillatory import extension as extension_field
from .wavepackets import smooth_step

REGION_C = 0.1  # c in Pi_d(lambda) and in N_c Z_d
SEPARATION_C = 4.0  # C in the C lambda^{1/2}-separated set V_ell
WEDGE_MIN = 0.1
CERT_MIN = 0.05
PLATEAU = 0.5  # psi = 1 on |u| <= PLATEAU
PERCENTILE = 5.0
KINDS = ("hyp_tuple", "ell_tuple", "tensor_multi", "bourgain_lin", "bg_elliptic_lin", "tensor_lin")


def plateau(r) -> np.ndarray:
    """Smooth radial cutoff: 1 for r <= PLATEAU, 0 for r >= 1."""
    return smooth_step((1.0 - np.asarray(r, dtype=float)) / (1.0 - PLATEAU))


def dyadic_step(target: float) -> float:
    """Largest 2^-j not exceeding target."""
    return 2.0 ** -int(np.ceil(-np.log2(target) - 1e-12))


def pair_matrix(pairs: int) -> np.ndarray:
    """L with <L w, w>/2 = sum_j w_{2j} w_{2j+1} (0-based)."""
    L = np.zeros((2 * pairs, 2 * pairs))
    for j in range(pairs):
        L[2 * j, 2 * j + 1] = L[2 * j + 1, 2 * j] = 1.0
    return L


def tensor_form(n: int, sigma: int) -> np.ndarray:
    """Hyperbolic pairs on the first n-1-sigma coordinates, then half-squares."""
    ex.check_pair(n, sigma)
    L = np.zeros((n - 1, n - 1))
    m = n - 1 - sigma
    L[:m, :m] = pair_matrix(m // 2)
    L[m:, m:] = np.eye(sigma)
    return L


@dataclass(frozen=True)
class ExampleSpec:
    kind: str
    n: int | None = None
    sigma: int | None = None
    k: int | None = None
    ell: int | None = None
    d: int | None = None
    lam: float = 64.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown example kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.kind == "hyp_tuple" and self.d is not None and self.d % 2 == 0:
            raise ParameterError("the hyperbolic tuple needs odd d")
        if self.kind == "tensor_multi" and None not in (self.n, self.sigma, self.k, self.ell, self.d):
            if not ex.ld_feasible(self.n, self.sigma, self.k, self.ell, self.d):
                raise ParameterError("(ell, d) violates the tensoring constraints")


@dataclass
class PredictedScaling:
    norm_exponent: F
    field_exponent: F
    region: str
    extra: dict = field(default_factory=dict)


def _wedge(vectors) -> float:
    A = np.atleast_2d(vectors)
    if A.shape[0] == 0:
        return 1.0
    return float(np.sqrt(max(np.linalg.det(A @ A.T), 0.0)))


def draw_anchors(count: int, dim: int, rng, radius: float = 0.5,
                 wedge_min: float = WEDGE_MIN, attempts: int = 10000) -> np.ndarray:
    """Rows a_0 = 0, a_1..a_count in the radius ball with |a_1 ^ ... ^ a_count| >= wedge_min."""
    for _ in range(attempts):
        pts = rng.uniform(-radius, radius, (count, dim))
        pts = pts[np.linalg.norm(pts, axis=1) <= radius] if count else pts
        if len(pts) == count and _wedge(pts) >= wedge_min:
            return np.vstack([np.zeros((1, dim)), pts])
    raise ParameterError(f"could not draw {count} anchors in R^{dim} with wedge >= {wedge_min}")


def _check_lam(lam):
    if not lam >= 1:
        raise ParameterError(f"lambda must be >= 1, got {lam}")


# ---------------------------------------------------------------- hyperbolic tuple

@dataclass
class HyperbolicTuple:
    d: int
    ell: int
    lam: float
    anchors: np.ndarray  # rows a_0 = 0, a_1, ... in R^{(d-1)/2}
    functions: list  # SampledFunction on R^{d-1}, or None when d = 1
    L: np.ndarray
    c: float
    prediction: PredictedScaling

    def centre(self, j: int) -> np.ndarray:
        """Centre of supp h_j: a_{j-1} in the odd slots, 0 in the even slots."""
        out = np.zeros(self.d - 1)
        out[0::2] = self.anchors[j - 1]
        return out

    def region_points(self, count: int, rng) -> np.ndarray:
        """Uniform points of Pi_d(lambda): |x_odd| <= c, |x_even|, |t| <= c lambda."""
        x = np.empty((count, self.d))
        half = (self.d - 1) // 2
        x[:, 0:self.d - 1:2] = rng.uniform(-self.c, self.c, (count, half))
        x[:, 1:self.d - 1:2] = rng.uniform(-self.c * self.lam, self.c * self.lam, (count, half))
        x[:, -1] = rng.uniform(-self.c * self.lam, self.c * self.lam, count)
        return x


def hyperbolic_tuple(d: int, ell: int, lam: float, seed: int = 0, step: float | None = None,
                     c: float = REGION_C, anchors=None) -> HyperbolicTuple:
    """h_j(w) = psi(10 (w_odd - a_{j-1})) psi(lambda w_even) for j = 1..ell."""
    if d < 1 or d % 2 == 0:
        raise ParameterError(f"the hyperbolic tuple needs odd d >= 1, got {d}")
    if not 1 <= ell <= (d + 1) // 2:
        raise ParameterError(f"ell must lie in [1, (d+1)/2] = [1, {(d + 1) // 2}], got {ell}")
    _check_lam(lam)
    half = (d - 1) // 2
    if anchors is None:
        anchors = draw_anchors(ell - 1, half, np.random.default_rng(seed))
    anchors = np.asarray(anchors, dtype=float).reshape(-1, half) if half else np.zeros((1, 0))
    pred = PredictedScaling(F(-(d - 1), 4), F(-(d - 1), 2), "Pi_d(lambda)",
                            {"c": c, "odd_support": 0.1, "even_support": 1 / lam})
    if d == 1:
        return HyperbolicTuple(d, ell, lam, anchors, [None], np.zeros((0, 0)), c, pred)
    step = dyadic_step(1 / (16 * lam)) if step is None else step
    funcs = []
    for j in range(ell):
        a = anchors[j]
        lo = np.empty(d - 1)
        hi = np.empty(d - 1)
        lo[0::2], hi[0::2] = a - 0.1, a + 0.1
        lo[1::2], hi[1::2] = -1 / lam, 1 / lam

        def h(W, a=a):
            return (plateau(10 * np.linalg.norm(W[..., 0::2] - a, axis=-1))
                    * plateau(lam * np.linalg.norm(W[..., 1::2], axis=-1)))

        funcs.append(SampledFunction.from_callable(h, d - 1, step, lo, hi))
    return HyperbolicTuple(d, ell, lam, anchors, funcs, pair_matrix(half), c, pred)


def field_floor(values) -> float:
    """Robust minimum: the PERCENTILE-th percentile of |values|."""
    return float(np.percentile(np.abs(values), PERCENTILE))


def hyperbolic_field_floor(tup: HyperbolicTuple, j: int = 1, count: int = 1000, seed: int = 0) -> float:
    pts = tup.region_points(count, np.random.default_rng(seed))
    vals = evaluate_points(PhaseFamily.extension(tup.L), tup.functions[j - 1], pts)
    return field_floor(vals)


# ---------------------------------------------------------------- elliptic tuple

@dataclass
class EllipticTuple:
    d: int
    ell: int
    lam: float
    L: np.ndarray
    anchors: np.ndarray  # rows b_0 = 0, b_1, ..., b_{d-1} in R^{d-1}
    slice_basis: np.ndarray  # orthonormal columns spanning V_ell intersected with R^{d-1} x {0}
    vset: np.ndarray  # rows v in the maximal separated set
    functions: list
    step: float
    prediction: PredictedScaling

    def gauss(self, w) -> np.ndarray:
        return np.append(-self.L @ np.asarray(w, dtype=float), 1.0)

    def piece(self, j: int, v) -> SampledFunction:
        """g_{j,v}(w) = exp(-2 pi i <v, w - b>) psi(lambda^{1/2} (w - b)), b = b_{j-1}."""
        b = self.anchors[j - 1]
        v = np.asarray(v, dtype=float)
        r = self.lam ** -0.5
        return SampledFunction.from_callable(
            lambda W: np.exp(-2j * np.pi * (W - b) @ v) * plateau(np.linalg.norm(W - b, axis=-1) / r),
            self.d - 1, self.step, b - r, b + r)

    def tube_core(self, j: int, v, t) -> np.ndarray:
        """Points x(t) = v - t dQ(b_{j-1}) of the core of T_{j,v}."""
        t = np.asarray(t, dtype=float)
        return np.asarray(v, dtype=float) - t[:, None] * (self.L @ self.anchors[j - 1])[None, :]

    def core_points(self, j: int, v, count: int, rng, c: float = REGION_C) -> np.ndarray:
        """Points of B(0, lambda) within c lambda^{1/2} / 2 of the core, |t| <= lambda / 2."""
        out = []
        while sum(len(o) for o in out) < count:
            t = rng.uniform(-self.lam / 2, self.lam / 2, count)
            u = rng.standard_normal((count, self.d - 1))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            rad = 0.5 * c * np.sqrt(self.lam) * rng.uniform(0, 1, count) ** (1 / max(self.d - 1, 1))
            x = np.hstack([self.tube_core(j, v, t) + rad[:, None] * u, t[:, None]])
            out.append(x[np.linalg.norm(x, axis=1) <= self.lam])
        return np.vstack(out)[:count]


def separated_set(basis: np.ndarray, radius: float, sep: float) -> np.ndarray:
    """Greedy maximal sep-separated subset of span(basis) cap B(0, radius), over a sep/2 lattice."""
    dim_amb, m = basis.shape
    if m == 0:
        return np.zeros((1, dim_amb))
    g = np.arange(-np.floor(2 * radius / sep), np.floor(2 * radius / sep) + 1) * sep / 2
    coords = np.stack(np.meshgrid(*([g] * m), indexing="ij"), axis=-1).reshape(-1, m)
    coords = coords[np.linalg.norm(coords, axis=1) <= radius + 1e-12]
    order = np.lexsort(tuple(coords.T[::-1]) + (np.round(np.linalg.norm(coords, axis=1), 12),))
    chosen = []
    for c in coords[order]:
        if not chosen or np.min(np.linalg.norm(np.array(chosen) - c, axis=1)) >= sep - 1e-12:
            chosen.append(c)
    return np.array(chosen) @ basis.T


def elliptic_tuple(d: int, ell: int, lam: float, seed: int = 0, L=None, C: float = SEPARATION_C,
                   step: float | None = None, anchors=None) -> EllipticTuple:
    """g_j = sum over v in V_ell of g_{j,v}, j = 1..ell, for Q(w) = <L w, w>/2 (default |w|^2/2)."""
    if d < 1:
        raise ParameterError(f"d must be >= 1, got {d}")
    if not 1 <= ell <= d:
        raise ParameterError(f"ell must lie in [1, d] = [1, {d}], got {ell}")
    _check_lam(lam)
    L = np.eye(d - 1) if L is None else np.asarray(L, dtype=float)
    if L.shape != (d - 1, d - 1):
        raise ParameterError("form matrix has the wrong size")
    if anchors is None:
        anchors = draw_anchors(ell - 1, d - 1, np.random.default_rng(seed))
    anchors = np.asarray(anchors, dtype=float).reshape(-1, d - 1) if d > 1 else np.zeros((1, 0))
    pred = PredictedScaling(F(-(d - ell), 4), F(-(d - 1), 2), "tubes T_{j,v}",
                            {"volume_exponent": F(d + ell, 2), "C": C})
    if d == 1:
        return EllipticTuple(d, ell, lam, L, anchors, np.zeros((0, 0)), np.zeros((1, 0)),
                             [None], 1.0, pred)
    # V_ell cap horizontal = span{G(b_j) - G(b_0)} = span{-L b_j : 1 <= j < ell}
    dirs = (L @ anchors[1:ell].T) if ell > 1 else np.zeros((d - 1, 0))
    basis = np.linalg.qr(dirs)[0][:, : np.linalg.matrix_rank(dirs)] if ell > 1 else dirs
    vset = separated_set(basis, lam, C * np.sqrt(lam))
    step = dyadic_step(1 / (8 * lam)) if step is None else step
    tup = EllipticTuple(d, ell, lam, L, anchors, basis, vset, [], step, pred)
    for j in range(1, ell + 1):
        g = None
        for v in vset:
            p = tup.piece(j, v)
            g = p if g is None else g + p
        tup.functions.append(g)
    return tup


def elliptic_core_floor(tup: EllipticTuple, j: int = 1, v=None, count: int = 1000, seed: int = 0) -> float:
    """Robust minimum of |E_Q g_{j,v}| over the core half of T_{j,v}."""
    v = np.zeros(tup.d - 1) if v is None else np.asarray(v, dtype=float)
    pts = tup.core_points(j, v, count, np.random.default_rng(seed))
    return field_floor(evaluate_points(PhaseFamily.extension(tup.L), tup.piece(j, v), pts))


# ---------------------------------------------------------------- tensoring

@dataclass
class TensorFactor:
    """h (x) g on R^{d-1} x R^{n-d}; a None factor is the constant 1 on R^0."""

    h: SampledFunction | None
    g: SampledFunction | None

    def l2_norm(self) -> float:
        return (self.h.l2_norm() if self.h is not None else 1.0) * \
               (self.g.l2_norm() if self.g is not None else 1.0)


def tensor_product(h: SampledFunction | None, g: SampledFunction | None) -> SampledFunction:
    """Materialise h (x) g on the common lattice (both steps must agree)."""
    if h is None or g is None:
        out = h if g is None else g
        if out is None:
            raise ParameterError("both factors are trivial")
        return out
    if abs(h.step - g.step) > 1e-15:
        raise ParameterError("tensor factors must share a lattice step")
    vals = np.multiply.outer(h.values, g.values)
    return SampledFunction(h.dim + g.dim, h.step, np.concatenate([h.origin, g.origin]), vals)


@dataclass
class MultilinearExample:
    n: int
    sigma: int
    k: int
    ell: int
    d: int
    lam: float
    L: np.ndarray
    hyp: HyperbolicTuple
    ell_tuple: EllipticTuple
    functions: list  # k TensorFactors: h_i (x) g_1 then h_1 (x) g_j
    certificate: float
    left: ex.AffineInvP
    right: ex.AffineInvP

    def predicted_ratio_exponent(self, p) -> F:
        return self.left(p) - self.right(p)


def _gauss_matrix(L, centres) -> np.ndarray:
    return np.stack([np.append(-L @ c, 1.0) for c in centres], axis=1)


def tensor_multilinear(n: int, sigma: int, k: int, lam: float, seed: int = 0,
                       attempts: int = 100) -> MultilinearExample:
    """The k-tuple of h_i (x) g_1 and h_1 (x) g_j with (ell, d) from the selection table."""
    choice = ex.optimal_ld(n, sigma, k)
    ell, d = choice.ell, choice.d
    if not ex.ld_feasible(n, sigma, k, ell, d):
        raise ParameterError(f"(ell, d) = ({ell}, {d}) infeasible for n={n}, sigma={sigma}, k={k}")
    L = tensor_form(n, sigma)
    Lg = L[d - 1:, d - 1:]
    k_ell = k - ell + 1
    left, right = ex.multilinear_sides(n, k, ell, d)
    for attempt in range(attempts):
        rng = np.random.default_rng([seed, attempt])
        half = (d - 1) // 2
        a = draw_anchors(half, half, rng)
        b = draw_anchors(n - d, n - d, rng)
        centres = [np.concatenate([_lift(a[i], d - 1), np.zeros(n - d)]) for i in range(ell)]
        centres += [np.concatenate([np.zeros(d - 1), b[j]]) for j in range(1, k_ell)]
        cert = float(np.linalg.svd(_gauss_matrix(L, centres), compute_uv=False)[-1])
        if cert > CERT_MIN:
            break
    else:
        raise ParameterError(f"no transversal anchors found in {attempts} attempts")
    hyp = hyperbolic_tuple(d, ell, lam, anchors=a)
    ellt = elliptic_tuple(n - d + 1, k_ell, lam, L=Lg, anchors=b)
    # the predicted sides must agree with the tuple-level exponents
    rhs = hyp.prediction.norm_exponent + ellt.prediction.norm_exponent
    lhs_const = hyp.prediction.field_exponent + ellt.prediction.field_exponent
    if rhs != right.const or lhs_const != left.const:
        raise RuntimeError("tuple exponents disagree with the multilinear bookkeeping")
    funcs = [TensorFactor(hyp.functions[i], ellt.functions[0]) for i in range(ell)]
    funcs += [TensorFactor(hyp.functions[0], ellt.functions[j]) for j in range(1, k_ell)]
    return MultilinearExample(n, sigma, k, ell, d, lam, L, hyp, ellt, funcs, cert, left, right)


def _lift(a, dim) -> np.ndarray:
    """The vector with a in the odd slots (0-based even positions) and zeros elsewhere."""
    out = np.zeros(dim)
    out[0::2] = a
    return out


def _factor_fields(funcs, L, axes, t_axis):
    """|E_Q f| on axes x t_axis for each f, with R^0 factors equal to 1."""
    out = []
    for f in funcs:
        if f is None:
            out.append(np.ones((1, len(t_axis))))
        else:
            fld = extension_field(L, f, list(axes) + [t_axis])
            out.append(np.abs(fld.values).reshape(-1, len(t_axis)))
    return out


def _radii2(axes):
    if not axes:
        return np.zeros(1)
    mesh = np.meshgrid(*axes, indexing="ij")
    return sum(m**2 for m in mesh).ravel()


def multilinear_norms(mx: MultilinearExample, p: float, odd_halfwidth: float = 32.0,
                      coarse: int = 32) -> tuple[float, float]:
    """(LHS, RHS) of the k-linear comparison on B(0, lambda).

    The integrand factors as H(x', t) G(x'', t) by the tensor identity; both
    factors are computed on their own grids over a shared t-axis.
    """
    lam, k, ell, d = mx.lam, mx.k, mx.ell, mx.d
    t_axis = grid_axis(-lam, lam, lam / coarse)
    h_axes = [grid_axis(-odd_halfwidth, odd_halfwidth, 0.5) if i % 2 == 0
              else grid_axis(-lam, lam, lam / coarse) for i in range(d - 1)]
    g_axes = [grid_axis(-lam, lam, np.sqrt(lam) / 2)] * (mx.n - d)
    Lh, Lg = mx.L[: d - 1, : d - 1], mx.L[d - 1:, d - 1:]
    hf = _factor_fields(mx.hyp.functions[:ell], Lh, h_axes, t_axis)
    gf = _factor_fields(mx.ell_tuple.functions[: k - ell + 1], Lg, g_axes, t_axis)
    H = hf[0] ** ((k - ell + 1) / k)
    for x in hf[1:]:
        H = H * x ** (1 / k)
    G = gf[0] ** (ell / k)
    for x in gf[1:]:
        G = G * x ** (1 / k)
    rh, rg = _radii2(h_axes), _radii2(g_axes)
    cell = float(np.prod([a[1] - a[0] for a in h_axes + g_axes + [t_axis]]))
    order = np.argsort(rg)
    rg_sorted = rg[order]
    total = 0.0
    for it, t in enumerate(t_axis):
        Gp = np.cumsum(G[order, it] ** p)
        room = lam**2 - t**2
        cut = np.searchsorted(rg_sorted, room - rh, side="right")
        ok = cut > 0
        total += float(np.sum(H[ok, it] ** p * Gp[cut[ok] - 1]))
    lhs = (total * cell) ** (1 / p)
    rhs = float(np.prod([fn.l2_norm() ** (1 / k) for fn in mx.functions]))
    return lhs, rhs


# ---------------------------------------------------------------- linear examples

@dataclass
class LinearExample:
    kind: str
    lam: float
    phase: PhaseFamily
    factors: tuple  # (hyperbolic part on R^{n-sigma-1} or None, elliptic part on R^sigma or None)
    prediction: PredictedScaling
    lp_exponent: ex.AffineInvP | None = None

    @property
    def input(self) -> SampledFunction:
        return tensor_product(*self.factors)


def bourgain_input(d: int, lam: float, step: float | None = None, radius: float = 0.9) -> SampledFunction:
    """h(w) = exp(pi i lam |w_odd|^2) on |w| < radius (|h| = 1 on the amplitude support)."""
    step = dyadic_step(1 / (4 * lam)) if step is None else step
    return SampledFunction.from_callable(
        lambda W: np.exp(1j * np.pi * lam * np.sum(W[..., 0::2] ** 2, axis=-1))
        * (np.linalg.norm(W, axis=-1) < radius),
        d - 1, step, -radius * np.ones(d - 1), radius * np.ones(d - 1))


def bg_surrogate(d: int, lam: float, seed: int = 0, step: float | None = None,
                 radius: float = 0.8) -> SampledFunction:
    """Sum over caps of radius lam^{-1/2} of e_theta e^{-2 pi i <v_theta, w - w_theta>} psi,
    with v_theta chosen so that each tube core lies in Z_d and e_theta seeded unit phases."""
    r = lam ** -0.5
    step = dyadic_step(1 / (8 * lam)) if step is None else step
    ticks = np.arange(-np.floor(radius / r), np.floor(radius / r) + 1) * r
    centres = np.stack(np.meshgrid(*([ticks] * (d - 1)), indexing="ij"), axis=-1).reshape(-1, d - 1)
    centres = centres[np.linalg.norm(centres, axis=1) <= radius]
    rng = np.random.default_rng(seed)
    phases = np.exp(2j * np.pi * rng.uniform(0, 1, len(centres)))
    out = SampledFunction.zeros(d - 1, step, -np.ones(d - 1), np.ones(d - 1))
    for c, e in zip(centres, phases):
        v = bg_modulation(c, lam)
        piece = SampledFunction.from_callable(
            lambda W: e * np.exp(-2j * np.pi * (W - c) @ v) * plateau(np.linalg.norm(W - c, axis=-1) / r),
            d - 1, step, c - r, c + r)
        out.accumulate(piece)
    return out


def bg_modulation(centre, lam: float) -> np.ndarray:
    """v with the E_d tube core through (v, 0) inside Z_d: v_{2j} = -lam w_{2j+1}, v_{2j+1} = 0."""
    centre = np.asarray(centre, dtype=float)
    v = np.zeros_like(centre)
    pairs = len(centre) // 2
    v[0:2 * pairs:2] = -lam * centre[1:2 * pairs:2]
    return v


def linear_example(kind: str, n: int, sigma: int | None = None, lam: float = 64.0, seed: int = 0,
                   step: float | None = None) -> LinearExample:
    """kind 'bourgain_lin' and 'bg_elliptic_lin' take n = d; 'tensor_lin' takes (n, sigma)."""
    _check_lam(lam)
    if kind == "bourgain_lin":
        d = n
        if d < 3 or d % 2 == 0:
            raise ParameterError(f"bourgain_lin needs odd d >= 3, got {d}")
        pred = PredictedScaling(F(0), F(-(d - 1), 4), "N_c Z_d cap B(0, lambda/2)",
                                {"c": REGION_C, "m_d": ex.m_dim(d)})
        return LinearExample(kind, lam, PhaseFamily.hd(d), (bourgain_input(d, lam, step), None), pred)
    if kind == "bg_elliptic_lin":
        d = n
        if d < 2:
            raise ParameterError(f"bg_elliptic_lin needs d >= 2, got {d}")
        m = ex.m_dim(d)
        lp = ex.AffineInvP(F(-(d + m - 2), 4), F(d + m, 2))
        pred = PredictedScaling(F(0), F(-(d + m - 2), 4), "N_{c lambda^{1/2}} Z_d cap B(0, lambda)",
                                {"m_d": m, "surrogate": "seeded-phase packets on Z_d tubes"})
        return LinearExample(kind, lam, PhaseFamily.ed(d), (None, bg_surrogate(d, lam, seed, step)),
                             pred, lp)
    if kind == "tensor_lin":
        if sigma is None:
            raise ParameterError("tensor_lin needs sigma")
        ex.check_pair(n, sigma)
        if sigma < 1:
            raise ParameterError("tensor_lin needs sigma >= 1")
        hd = n - sigma
        step = dyadic_step(1 / (8 * lam)) if step is None else step
        h = bourgain_input(hd, lam, step) if hd >= 3 else None
        g = bg_surrogate(sigma + 1, lam, seed, step)
        lp = ex.tensor_linear_exponent(n, sigma)
        pred = PredictedScaling(F(0), lp.const, "N_c Z_{n-sigma} x R^sigma slab", {"lp": str(lp)})
        return LinearExample(kind, lam, PhaseFamily.tensor(n, sigma), (h, g), pred, lp)
    raise ParameterError(f"unknown linear example kind {kind!r}")


def bourgain_slice_samples(lam: float, c: float = REGION_C, slices: int = 9, grid_step: float = 0.5,
                           step: float | None = None) -> np.ndarray:
    """|T^lam h| for d = 3 at grid points of N_c Z_3 cap B(0, lam/2).

    Each x_3-slice is one FFT-evaluated grid over [-lam/2, lam/2]^2; the points
    kept are those within c of the slice line x_2 = x_1 x_3 / lam.
    """
    h = bourgain_input(3, lam, step)
    phase = PhaseFamily.hd(3)
    ax = grid_axis(-lam / 2, lam / 2, grid_step)
    Z = VarietyZ(3, lam)
    vals = []
    for x3 in np.linspace(-lam / 2, lam / 2, slices):
        fld = hormander(phase, lam, h, [ax, ax, np.array([x3])])
        X = fld.mesh()[..., 0, :]
        keep = (Z.distance(X.reshape(-1, 3)) <= c) & (np.linalg.norm(X.reshape(-1, 3), axis=1) <= lam / 2)
        vals.append(np.abs(fld.values[..., 0].ravel()[keep]))
    return np.concatenate(vals)


def bourgain_points(lam: float, count: int, seed: int = 0, c: float = REGION_C) -> np.ndarray:
    """Random points of N_c Z_3 cap B(0, lam/2), for the pointwise route."""
    return VarietyZ(3, lam).sample_neighbourhood(c, lam / 2, count, np.random.default_rng(seed))


def lp_norm_mc(ex_: LinearExample, p: float, count: int = 1000, seed: int = 0) -> float:
    """Monte Carlo estimate of ||T^lam f||_{L^p(B(0, lam))} with seeded uniform points."""
    n = ex_.phase.n
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((count, n))
    pts *= (ex_.lam * rng.uniform(0, 1, count) ** (1 / n) / np.linalg.norm(pts, axis=1))[:, None]
    vals = evaluate_points(ex_.phase, ex_.input, pts, ex_.lam, amplitude="bump")
    vol = np.pi ** (n / 2) / gamma(n / 2 + 1) * ex_.lam**n
    return float((np.mean(np.abs(vals) ** p) * vol) ** (1 / p))


# ---------------------------------------------------------------- scans

def power_law_slope(lams, values) -> float:
    """Least-squares slope of log(values) against log(lams)."""
    return float(np.polyfit(np.log(lams), np.log(values), 1)[0])


def example_scan(kind: str, lams, n: int = 3, sigma: int = 0, k: int = 2, p: float = 4.0,
                 seed: int = 0, count: int = 1000) -> list[dict]:
    """Rows (lambda, lhs, rhs, ratio, predicted_exponent) for one example kind.

    hyp_tuple: floor of |E_Q h_1| on Pi_d against ||h_1||_2 (d = n).
    ell_tuple: core floor of |E_Q g_{1,0}| against ||g_1||_2 (d = n, ell = k).
    tensor_multi: the k-linear L^p norm against the product of L^2 norms.
    bourgain_lin: floor of |T h| on N_c Z_3 against ||h||_2 (d = 3 only).
    bg_elliptic_lin / tensor_lin: Monte Carlo ||T f||_p against ||f||_2.
    """
    rows = []
    for lam in lams:
        lam = float(lam)
        if kind == "hyp_tuple":
            tup = hyperbolic_tuple(n, min(k, (n + 1) // 2), lam, seed)
            lhs, rhs = hyperbolic_field_floor(tup, 1, count, seed), tup.functions[0].l2_norm()
            pred = tup.prediction.field_exponent - tup.prediction.norm_exponent
        elif kind == "ell_tuple":
            tup = elliptic_tuple(n, min(k, n), lam, seed)
            lhs, rhs = elliptic_core_floor(tup, 1, None, count, seed), tup.functions[0].l2_norm()
            pred = tup.prediction.field_exponent - tup.prediction.norm_exponent
        elif kind == "tensor_multi":
            mx = tensor_multilinear(n, sigma, k, lam, seed)
            lhs, rhs = multilinear_norms(mx, p)
            pred = mx.predicted_ratio_exponent(F(p).limit_denominator(1000))
        elif kind == "bourgain_lin":
            if n != 3:
                raise ParameterError("the bourgain_lin scan is implemented for d = 3")
            lin = linear_example(kind, 3, lam=lam)
            lhs, rhs = field_floor(bourgain_slice_samples(lam)), lin.input.l2_norm()
            pred = lin.prediction.field_exponent
        elif kind in ("bg_elliptic_lin", "tensor_lin"):
            lin = linear_example(kind, n, sigma, lam, seed)
            lhs, rhs = lp_norm_mc(lin, p, count, seed), lin.input.l2_norm()
            pred = lin.lp_exponent(F(p).limit_denominator(1000))
        else:
            raise ParameterError(f"unknown example kind {kind!r}")
        rows.append({"lambda": lam, "lhs": lhs, "rhs": rhs, "ratio": lhs / rhs,
                     "predicted_exponent": float(pred)})
    return rows
