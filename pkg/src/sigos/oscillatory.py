"""Quadrature for extension operators and Hörmander-type operators.

Phases have the form phi(x; w) = <x', w> + 1/2 <A(x_n) w, w> with A(t) a
polynomial matrix family.  At fixed x_n the integrand is f(w) times a
quadratic chirp, so each slice is one separable discrete Fourier sum over
the w-lattice, evaluated either by direct matrix products or by a zero
padded FFT when the x'-grid is commensurate with the w-step.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .geometry import QuadraticForm, signature_diag

LATTICE_TOL = 1e-9


def bump(u) -> np.ndarray:
    """psi(u) = exp(1 - 1/(1 - u^2)) on |u| < 1, zero outside; u may be |vector|."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    return out


def radial_bump(x, scale: float = 1.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return bump(np.linalg.norm(x, axis=-1) / scale)


# ---------------------------------------------------------------- phases

@dataclass(frozen=True)
class PhaseFamily:
    """A(t) = sum_k coeffs[k] t^k acting on R^{n-1}."""

    coeffs: tuple
    kind: str
    label: str = ""

    def __post_init__(self):
        for C in self.coeffs:
            if np.max(np.abs(C - C.T), initial=0.0) > 1e-14:
                raise ParameterError("phase coefficients must be symmetric")
        if len(self.coeffs) < 2:
            raise ParameterError("phase family needs a linear term")
        w = np.linalg.eigvalsh(self.coeffs[1])
        if np.min(np.abs(w), initial=np.inf) < 1e-12:
            raise ParameterError("A'(0) must be invertible")

    @property
    def n(self) -> int:
        return self.coeffs[0].shape[0] + 1

    @property
    def sigma(self) -> int:
        w = np.linalg.eigvalsh(self.coeffs[1])
        return abs(int(np.sum(w > 0)) - int(np.sum(w < 0)))

    @property
    def is_linear(self) -> bool:
        """True when A(t) = t M exactly."""
        return not np.any(self.coeffs[0]) and not any(np.any(C) for C in self.coeffs[2:])

    def A(self, t: float) -> np.ndarray:
        return sum(C * t**k for k, C in enumerate(self.coeffs))

    def A_prime(self, t: float) -> np.ndarray:
        return sum(k * C * t ** (k - 1) for k, C in enumerate(self.coeffs) if k)

    def scaled_weights(self, xn, lam: float | None) -> np.ndarray:
        """Weights c_k(x_n) with lam*A(x_n/lam) = sum_k c_k C_k (lam=None: A(x_n))."""
        xn = np.asarray(xn, dtype=float)
        k = np.arange(len(self.coeffs))
        if lam is None:
            return xn[..., None] ** k
        return lam ** (1.0 - k) * xn[..., None] ** k

    def phase(self, x, omega, lam: float | None = None) -> np.ndarray:
        """phi(x; w), or phi^lam(x; w) = lam phi(x/lam; w) when lam is given."""
        x = np.asarray(x, dtype=float)
        omega = np.asarray(omega, dtype=float)
        lin = np.sum(x[..., :-1] * omega, axis=-1)
        wts = self.scaled_weights(x[..., -1], lam)
        quad = sum(wts[..., k] * np.einsum("...i,ij,...j->...", omega, C, omega)
                   for k, C in enumerate(self.coeffs))
        return lin + 0.5 * quad

    # constructors

    @classmethod
    def extension(cls, Q) -> "PhaseFamily":
        L = Q.L if isinstance(Q, QuadraticForm) else np.asarray(Q, dtype=float)
        return cls((np.zeros_like(L), L.copy()), "extension", f"extension:{_sig_label(L)}")

    @classmethod
    def hd(cls, d: int) -> "PhaseFamily":
        """Blocks (0 t; t t^2) on R^{d-1}, d odd."""
        if d < 3 or d % 2 == 0:
            raise ParameterError(f"H_d needs odd d >= 3, got {d}")
        return cls(_block_coeffs(d - 1, hyperbolic=True), "hd", f"hd:{d}")

    @classmethod
    def ed(cls, d: int) -> "PhaseFamily":
        """Blocks (t t^2; t^2 t+t^3), plus a trailing (t) when d is even."""
        if d < 2:
            raise ParameterError(f"E_d needs d >= 2, got {d}")
        return cls(_block_coeffs(d - 1, hyperbolic=False), "ed", f"ed:{d}")

    @classmethod
    def tensor(cls, n: int, sigma: int) -> "PhaseFamily":
        """A_{n,sigma} = H_{n-sigma} (+) E_{sigma+1}; empty blocks are dropped."""
        signature_diag(n, sigma)  # validates the pair
        hyp = _block_coeffs(n - 1 - sigma, hyperbolic=True)
        ell = _block_coeffs(sigma, hyperbolic=False)
        coeffs = tuple(_direct_sum(a, b) for a, b in zip(hyp, ell))
        return cls(coeffs, "tensor", f"tensor:{n},{sigma}")

    @classmethod
    def parse(cls, spec: str) -> "PhaseFamily":
        """Parse 'extension:sigma[,n]' (n defaults to 3), 'hd:d', 'ed:d' or 'tensor:n,sigma'."""
        try:
            kind, args = spec.split(":", 1)
            nums = [int(a) for a in args.split(",")]
        except ValueError as err:
            raise ParameterError(f"malformed phase spec {spec!r}") from err
        if kind == "extension":
            sigma = nums[0]
            n = nums[1] if len(nums) > 1 else 3
            return cls.extension(np.diag(signature_diag(n, sigma)))
        if kind == "hd":
            return cls.hd(nums[0])
        if kind == "ed":
            return cls.ed(nums[0])
        if kind == "tensor":
            return cls.tensor(nums[0], nums[1])
        raise ParameterError(f"unknown phase kind {kind!r}")


def _sig_label(L):
    w = np.linalg.eigvalsh(L)
    return str(abs(int(np.sum(w > 0)) - int(np.sum(w < 0))))


def _block_coeffs(dim: int, hyperbolic: bool) -> tuple:
    """Coefficient matrices C_0..C_3 for H-type or E-type blocks on R^dim."""
    C = [np.zeros((dim, dim)) for _ in range(4)]
    if hyperbolic and dim % 2:
        raise ParameterError("hyperbolic blocks need an even dimension")
    for j in range(0, dim - 1, 2):
        if hyperbolic:
            C[1][j, j + 1] = C[1][j + 1, j] = 1.0
            C[2][j + 1, j + 1] = 1.0
        else:
            C[1][j, j] = C[1][j + 1, j + 1] = 1.0
            C[2][j, j + 1] = C[2][j + 1, j] = 1.0
            C[3][j + 1, j + 1] = 1.0
    if not hyperbolic and dim % 2:
        C[1][dim - 1, dim - 1] = 1.0
    return tuple(C)


def _direct_sum(a, b):
    out = np.zeros((a.shape[0] + b.shape[0],) * 2)
    out[: a.shape[0], : a.shape[0]] = a
    out[a.shape[0]:, a.shape[0]:] = b
    return out


# ---------------------------------------------------------------- samples

@dataclass
class SampledFunction:
    """Samples of f on the sub-box origin + step * Z^dim of the lattice -1 + step Z.

    Only the support box is stored; values outside it are zero.
    """

    dim: int
    step: float
    origin: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(self.dim)
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != self.dim:
            raise ParameterError("values must have one axis per dimension")
        cells = 1.0 / self.step
        if abs(cells - round(cells)) > LATTICE_TOL * cells:
            raise ParameterError(f"step {self.step} does not divide the unit interval")
        k = (self.origin + 1.0) / self.step
        if np.max(np.abs(k - np.round(k)), initial=0) > 1e-6:
            raise ParameterError("origin must lie on the lattice -1 + step Z")
        far = self.origin + self.step * (np.array(self.values.shape) - 1)
        if np.any(self.origin < -1 - 1e-12) or np.any(far > 1 + 1e-12):
            raise ParameterError("support must lie in the closed unit cube")

    @property
    def axes(self) -> list[np.ndarray]:
        return [self.origin[i] + self.step * np.arange(s) for i, s in enumerate(self.values.shape)]

    def mesh(self) -> np.ndarray:
        """Array of nodes with shape values.shape + (dim,)."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @property
    def cell(self) -> float:
        return self.step**self.dim

    def integral(self) -> complex:
        return complex(self.values.sum() * self.cell)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.cell))

    def __mul__(self, scalar):
        return SampledFunction(self.dim, self.step, self.origin, self.values * scalar)

    __rmul__ = __mul__

    def __add__(self, other: "SampledFunction") -> "SampledFunction":
        lo, hi = _union_box(self, other)
        out = SampledFunction.zeros(self.dim, self.step, lo, hi)
        out.accumulate(self)
        out.accumulate(other)
        return out

    @classmethod
    def zeros(cls, dim, step, lo, hi) -> "SampledFunction":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        shape = tuple(int(round((b - a) / step)) + 1 for a, b in zip(lo, hi))
        return cls(dim, step, lo, np.zeros(shape, dtype=complex))

    def accumulate(self, other: "SampledFunction") -> None:
        """Add `other` in place; its box must sit inside this one on the same lattice."""
        if abs(other.step - self.step) > 1e-15:
            raise ParameterError("lattice steps differ")
        off = np.round((other.origin - self.origin) / self.step).astype(int)
        sl = tuple(slice(o, o + s) for o, s in zip(off, other.values.shape))
        if np.any(off < 0) or any(o + s > t for o, s, t in zip(off, other.values.shape, self.values.shape)):
            raise ParameterError("box escapes the accumulator")
        self.values[sl] += other.values

    @classmethod
    def from_callable(cls, fn, dim: int, step: float, lo=None, hi=None) -> "SampledFunction":
        """Sample fn(nodes) on lattice points of [lo, hi] (default the unit cube)."""
        lo = -np.ones(dim) if lo is None else np.asarray(lo, dtype=float)
        hi = np.ones(dim) if hi is None else np.asarray(hi, dtype=float)
        a = np.maximum(np.ceil((lo + 1) / step - 1e-9) * step - 1, -1.0)
        b = np.minimum(np.floor((hi + 1) / step + 1e-9) * step - 1, 1.0)
        shape = tuple(int(round((y - x) / step)) + 1 for x, y in zip(a, b))
        f = cls(dim, step, a, np.zeros(shape, dtype=complex))
        f.values = np.asarray(fn(f.mesh()), dtype=complex)
        return f

    # serialisation

    def to_json(self) -> dict:
        flat = self.values.ravel()
        return {
            "dim": self.dim,
            "step": self.step,
            "origin": self.origin.tolist(),
            "shape": list(self.values.shape),
            "values": [[float(z.real), float(z.imag)] for z in flat],
        }

    @classmethod
    def from_json(cls, data: dict) -> "SampledFunction":
        for key in ("dim", "step", "origin", "values"):
            if key not in data:
                raise ParameterError(f"sampled function JSON lacks field {key!r}")
        vals = np.asarray(data["values"], dtype=float)
        if vals.ndim != 2 or vals.shape[1] != 2:
            raise ParameterError("field 'values' must be a list of [re, im] pairs")
        shape = data.get("shape") or [round(len(vals) ** (1 / data["dim"]))] * data["dim"]
        z = (vals[:, 0] + 1j * vals[:, 1]).reshape(shape)
        return cls(int(data["dim"]), float(data["step"]), data["origin"], z)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "SampledFunction":
        return cls.from_json(json.loads(Path(path).read_text()))


def _union_box(a, b):
    lo = np.minimum(a.origin, b.origin)
    hi = np.maximum(a.origin + a.step * (np.array(a.values.shape) - 1),
                    b.origin + b.step * (np.array(b.values.shape) - 1))
    return lo, hi


# ---------------------------------------------------------------- fields

@dataclass
class Field:
    """Samples of an operator output on a tensor grid (axes[i] uniform)."""

    axes: tuple
    values: np.ndarray
    lam: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def steps(self) -> tuple:
        return tuple(float(a[1] - a[0]) if len(a) > 1 else 1.0 for a in self.axes)

    @property
    def cell(self) -> float:
        return float(np.prod(self.steps))

    @property
    def region(self) -> list[tuple[float, float]]:
        return [(float(a[0]), float(a[-1])) for a in self.axes]

    def mesh(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)


def grid_axis(lo: float, hi: float, step: float) -> np.ndarray:
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def max_step(max_radius: float) -> float:
    """Largest admissible w-step for outputs within |x| <= max_radius."""
    return 1.0 / (4.0 * max_radius) if max_radius > 0 else np.inf


def _check_resolution(step, radius):
    hmax = max_step(radius)
    if step > hmax * (1 + 1e-12):
        raise ParameterError(
            f"w-step {step:g} does not resolve |x| up to {radius:g}; use step <= {hmax:.6g}"
        )


def _box_radius(axes) -> float:
    return float(np.sqrt(sum(max(abs(a[0]), abs(a[-1])) ** 2 for a in axes)))


# ---------------------------------------------------------------- transforms

def _axis_matrix(w_axis, x_axis):
    return np.exp(2j * np.pi * np.outer(x_axis, w_axis))


def _fft_size(w_axis, x_axis):
    """N with step_x * step_w = 1/N, when that N is an integer >= both lengths."""
    if len(w_axis) < 2 or len(x_axis) < 2:
        return None
    prod = (w_axis[1] - w_axis[0]) * (x_axis[1] - x_axis[0])
    N = 1.0 / prod
    Nr = int(round(N))
    if abs(N - Nr) > LATTICE_TOL * N or Nr < max(len(w_axis), len(x_axis)):
        return None
    return Nr


def _axis_transform(g, axis, w_axis, x_axis, method):
    """sum_j g[..., j, ...] exp(2 pi i x_k w_j) along `axis`."""
    N = _fft_size(w_axis, x_axis) if method in ("auto", "fft") else None
    if method == "fft" and N is None:
        raise ParameterError("grids are not FFT-compatible (step_x * step_w must be 1/N)")
    g = np.moveaxis(g, axis, -1)
    if N is None:
        out = g @ _axis_matrix(w_axis, x_axis).T
    else:
        h = w_axis[1] - w_axis[0]
        w0, x0 = w_axis[0], x_axis[0]
        j = np.arange(len(w_axis))
        G = g * np.exp(2j * np.pi * x0 * j * h)
        out = N * np.fft.ifft(G, n=N, axis=-1)[..., : len(x_axis)]
        out = out * np.exp(2j * np.pi * x_axis * w0)
    return np.moveaxis(out, -1, axis)


def _quad_tables(phase: PhaseFamily, f: SampledFunction):
    W = f.mesh()
    return [np.einsum("...i,ij,...j->...", W, C, W) if np.any(C) else None for C in phase.coeffs]


def _slices(phase, f, lam, xn_axis, xprime_axes, method, weights):
    tables = _quad_tables(phase, f)
    g0 = f.values * weights
    out = np.empty((len(xn_axis),) + tuple(len(a) for a in xprime_axes), dtype=complex)
    for i, t in enumerate(xn_axis):
        c = phase.scaled_weights(t, lam)
        q = sum(c[k] * T for k, T in enumerate(tables) if T is not None)
        g = g0 * np.exp(1j * np.pi * q)
        for ax, (w_axis, x_axis) in enumerate(zip(f.axes, xprime_axes)):
            g = _axis_transform(g, ax, w_axis, x_axis, method)
        out[i] = g
    return np.moveaxis(out, 0, -1) * f.cell


def extension(Q, f: SampledFunction, axes, method: str = "auto") -> Field:
    """E_Q f on the tensor grid `axes` (the last axis is x_n), trapezoidal rule."""
    phase = PhaseFamily.extension(Q)
    return _evaluate_grid(phase, None, f, axes, method, amplitude=None)


def hormander(phase: PhaseFamily, lam: float, f: SampledFunction, axes,
              method: str = "auto", amplitude: str | None = "bump") -> Field:
    """T^lam f on a grid, with amplitude psi(|x|/(0.9 lam)) psi(|w|/0.9) by default."""
    if _box_radius(axes) > lam * (1 + 1e-12):
        raise ParameterError("hormander region must lie in B(0, lambda)")
    return _evaluate_grid(phase, lam, f, axes, method, amplitude)


def _evaluate_grid(phase, lam, f, axes, method, amplitude):
    axes = tuple(np.asarray(a, dtype=float) for a in axes)
    if len(axes) != phase.n or f.dim != phase.n - 1:
        raise ParameterError("grid, phase and input dimensions disagree")
    _check_resolution(f.step, _box_radius(axes))
    weights = radial_bump(f.mesh(), 0.9) if amplitude == "bump" else 1.0
    vals = _slices(phase, f, lam, axes[-1], axes[:-1], method, weights)
    out = Field(axes, vals, lam, {"phase": phase.label, "amplitude": amplitude or "none"})
    if amplitude == "bump":
        out.values = out.values * radial_bump(out.mesh(), 0.9 * lam)
    return out


def evaluate_points(phase: PhaseFamily, f: SampledFunction, points, lam: float | None = None,
                    amplitude: str | None = None, chunk: int | None = None) -> np.ndarray:
    """Direct quadrature at arbitrary points (P x n); the independent oracle route.

    Points are processed `chunk` at a time (default: about 2^22 phase entries per chunk).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    _check_resolution(f.step, float(np.max(np.linalg.norm(pts, axis=1), initial=0.0)))
    W = f.mesh().reshape(-1, f.dim)
    vals = f.values.ravel()
    keep = vals != 0
    W, vals = W[keep], vals[keep]
    if amplitude == "bump":
        vals = vals * radial_bump(W, 0.9)
    quads = [np.einsum("mi,ij,mj->m", W, C, W) for C in phase.coeffs]
    if chunk is None:
        chunk = max(1, (1 << 22) // max(len(W), 1))
    out = np.empty(len(pts), dtype=complex)
    for s in range(0, len(pts), chunk):
        P = pts[s: s + chunk]
        c = phase.scaled_weights(P[:, -1], lam)
        ph = P[:, :-1] @ W.T + 0.5 * sum(c[:, [k]] * q[None, :] for k, q in enumerate(quads))
        out[s: s + chunk] = np.exp(2j * np.pi * ph) @ vals
    out *= f.cell
    if amplitude == "bump":
        out *= radial_bump(pts, 0.9 * lam)
    return out


# ---------------------------------------------------------------- reduced-phase validator

@dataclass(frozen=True)
class ReducedPhaseReport:
    mixed: float  # max ||d2_{w x'} phi - I||
    gradient: float  # max |d_w d_{x_n} phi|
    curvature: float  # max ||d2_{ww} d_{x_n} phi - A'(0)||
    c_ex: float
    reference_sigma: int
    samples: int

    @property
    def passed(self) -> bool:
        return max(self.mixed, self.gradient, self.curvature) < self.c_ex


def validate_reduced_phase(phase: PhaseFamily, lam: float = 1.0, sample_count: int = 2000,
                           c_ex: float = 0.1, x_box=0.05, omega_box=0.05,
                           seed: int = 0) -> ReducedPhaseReport:
    """Check the three reduced-phase conditions at random points of X x Omega.

    Derivatives are exact: d2_{w x'} phi = I, d_w d_{x_n} phi = A'(x_n) w and
    d2_{ww} d_{x_n} phi = A'(x_n), with x'-derivatives of the Hessian zero.
    The curvature reference is A'(0), a matrix of the declared signature.
    Boxes are half-widths of cubes centred at 0; lam only rescales x and is
    recorded for completeness (phi^lam at lam x has the same derivatives).
    """
    n = phase.n
    rng = np.random.default_rng(seed)
    xn = rng.uniform(-x_box, x_box, sample_count)
    w = rng.uniform(-omega_box, omega_box, (sample_count, n - 1))
    ref = phase.A_prime(0.0)
    grad = 0.0
    curv = 0.0
    for t, om in zip(xn, w):
        Ap = phase.A_prime(t)
        grad = max(grad, float(np.linalg.norm(Ap @ om)))
        curv = max(curv, float(np.linalg.norm(Ap - ref, 2)))
    return ReducedPhaseReport(0.0, grad, curv, c_ex, phase.sigma, sample_count)


def largest_passing_box(phase: PhaseFamily, c_ex: float = 0.1, omega_box: float = 0.05,
                        sample_count: int = 500, iters: int = 30, seed: int = 0) -> float:
    """Bisect the x-box half-width until the validator passes."""
    lo, hi = 0.0, 1.0
    if validate_reduced_phase(phase, 1.0, sample_count, c_ex, hi, omega_box, seed).passed:
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if validate_reduced_phase(phase, 1.0, sample_count, c_ex, mid, omega_box, seed).passed:
            lo = mid
        else:
            hi = mid
    return lo
