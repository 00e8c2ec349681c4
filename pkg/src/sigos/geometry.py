"""Linear algebra of quadratic forms, subspaces and the model varieties Z_d."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import exponents as ex
from .errors import AcceptanceFailure, ParameterError

SYM_TOL = 1e-12
ORTHO_TOL = 1e-10
RANK_TOL = 1e-9
ANGLE_REJECT = 1e-6
GUARD_BAND = 1e-10


@dataclass(frozen=True)
class QuadraticForm:
    """Q(u) = <L u, u> / 2 on R^dim."""

    L: np.ndarray
    sigma: int

    @property
    def dim(self) -> int:
        return self.L.shape[0]

    @classmethod
    def from_matrix(cls, L) -> "QuadraticForm":
        L = np.asarray(L, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise ParameterError("form matrix must be square")
        if np.max(np.abs(L - L.T), initial=0.0) > SYM_TOL:
            raise ParameterError("form matrix must be symmetric")
        eig = np.linalg.eigvalsh(L)
        if eig.size and np.min(np.abs(eig)) <= SYM_TOL:
            raise ParameterError("form matrix must be invertible")
        sigma = abs(int(np.sum(eig > 0)) - int(np.sum(eig < 0)))
        return cls(L, sigma)

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", u, self.L, u)

    def grad(self, u) -> np.ndarray:
        return np.asarray(u, dtype=float) @ self.L.T

    @property
    def rho(self) -> float:
        """Smallest absolute eigenvalue."""
        return float(np.min(np.abs(np.linalg.eigvalsh(self.L))))


def signature_diag(n: int, sigma: int) -> np.ndarray:
    ex.check_pair(n, sigma)
    pos = (n - 1 + sigma) // 2
    return np.array([1.0] * pos + [-1.0] * (n - 1 - pos))


def signature_matrix(n: int, sigma: int) -> QuadraticForm:
    """The form with matrix diag(I_{(n-1+sigma)/2}, -I_{(n-1-sigma)/2})."""
    return QuadraticForm(np.diag(signature_diag(n, sigma)), sigma)


def pair_form(d: int) -> QuadraticForm:
    """Sum of omega_{2j-1} omega_{2j} on R^{d-1}, d odd (signature zero)."""
    if d < 1 or d % 2 == 0:
        raise ParameterError(f"pair form needs odd d >= 1, got {d}")
    L = np.zeros((d - 1, d - 1))
    for j in range(0, d - 1, 2):
        L[j, j + 1] = L[j + 1, j] = 1.0
    return QuadraticForm(L, 0)


def mixed_form(n: int, sigma: int) -> QuadraticForm:
    """Hyperbolic pairs on the first n-1-sigma variables, squares/2 on the rest."""
    ex.check_pair(n, sigma)
    hyp = n - 1 - sigma
    L = np.zeros((n - 1, n - 1))
    for j in range(0, hyp, 2):
        L[j, j + 1] = L[j + 1, j] = 1.0
    for j in range(hyp, n - 1):
        L[j, j] = 1.0
    return QuadraticForm(L, sigma)


def gauss_map(Q: QuadraticForm, omega) -> np.ndarray:
    """Unnormalised normal (-grad Q(omega), 1)."""
    g = -Q.grad(omega)
    ones = np.ones(g.shape[:-1] + (1,))
    return np.concatenate([g, ones], axis=-1)


@dataclass(frozen=True)
class Subspace:
    basis: np.ndarray  # ambient x dim, orthonormal columns

    @property
    def ambient(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def __post_init__(self):
        b = self.basis
        if b.ndim != 2:
            raise ParameterError("basis must be a 2-d array")
        if b.shape[1] and np.max(np.abs(b.T @ b - np.eye(b.shape[1]))) > ORTHO_TOL:
            raise ParameterError("basis columns must be orthonormal")

    @classmethod
    def span(cls, vectors, ambient: int | None = None, tol: float = RANK_TOL) -> "Subspace":
        """Orthonormal basis of the column span of `vectors`."""
        A = np.asarray(vectors, dtype=float)
        if A.ndim == 1:
            A = A[:, None]
        if A.size == 0:
            return cls.zero(ambient if ambient is not None else A.shape[0])
        U, s, _ = np.linalg.svd(A, full_matrices=False)
        r = int(np.sum(s > tol * max(1.0, s[0])))
        return cls(U[:, :r])

    @classmethod
    def zero(cls, ambient: int) -> "Subspace":
        return cls(np.zeros((ambient, 0)))

    @classmethod
    def coordinate(cls, ambient: int, indices) -> "Subspace":
        return cls(np.eye(ambient)[:, list(indices)])

    def complement(self) -> "Subspace":
        if self.dim == 0:
            return Subspace(np.eye(self.ambient))
        U, s, _ = np.linalg.svd(self.basis, full_matrices=True)
        return Subspace(U[:, self.dim:])

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def __add__(self, other: "Subspace") -> "Subspace":
        return Subspace.span(np.hstack([self.basis, other.basis]), self.ambient)

    def intersect(self, other: "Subspace") -> "Subspace":
        return (self.complement() + other.complement()).complement()

    def contains(self, v, tol: float = 1e-9) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.linalg.norm(v - self.projector() @ v) <= tol * max(1.0, np.linalg.norm(v)))


def _require_nonzero(*spaces: Subspace) -> None:
    for s in spaces:
        if s.dim == 0:
            raise ParameterError("angle undefined for the zero subspace")


def min_pair_angle(V: Subspace, W: Subspace) -> float:
    """Smallest angle between unit vectors of V and W."""
    _require_nonzero(V, W)
    s = np.linalg.svd(V.basis.T @ W.basis, compute_uv=False)
    return float(np.arccos(np.clip(s[0], -1.0, 1.0)))


def max_angle_to_horizontal(V: Subspace) -> float:
    """max over unit v in V of the angle between v and the hyperplane e_n^perp."""
    _require_nonzero(V)
    # the largest |v_n| over unit v in V is the norm of the last row of the basis
    return float(np.arcsin(np.clip(np.linalg.norm(V.basis[-1]), 0.0, 1.0)))


@dataclass(frozen=True)
class AuxResult:
    V_sl: Subspace
    Vt_sl: Subspace
    V_aux: Subspace
    lower: int
    upper: int

    @property
    def ok(self) -> bool:
        return self.lower <= self.V_aux.dim <= self.upper


def horizontal_slice(V: Subspace) -> Subspace:
    """Projection to R^{n-1} of V intersected with the hyperplane x_n = 0."""
    if max_angle_to_horizontal(V) < ANGLE_REJECT:
        raise ParameterError("subspace is too close to horizontal (angle condition)")
    last = V.basis[-1:, :]
    _, _, vt = np.linalg.svd(last)
    kernel = vt[1:].T  # dim V - 1 coefficient vectors killing the last coordinate
    return Subspace.span(V.basis[:-1] @ kernel, V.ambient - 1)


def aux_subspace(L, V: Subspace, sigma: int | None = None, strict: bool = True) -> AuxResult:
    """Auxiliary subspace (V_sl + L^{-1} V_sl)^perp in R^{n-1} with its dimension bounds."""
    L = np.asarray(L, dtype=float)
    n = V.ambient
    if L.shape != (n - 1, n - 1):
        raise ParameterError("form dimension must be ambient dimension minus one")
    if sigma is None:
        sigma = QuadraticForm.from_matrix(L).sigma
    V_sl = horizontal_slice(V)
    Vt_sl = Subspace.span(np.linalg.solve(L, V_sl.basis), n - 1) if V_sl.dim else Subspace.zero(n - 1)
    V_aux = (V_sl + Vt_sl).complement()
    lower = int(ex.mu(n, sigma, V.dim).value)
    res = AuxResult(V_sl, Vt_sl, V_aux, lower, n - V.dim)
    if strict and not res.ok:
        raise AcceptanceFailure(
            f"dim V_aux = {V_aux.dim} outside [{lower}, {n - V.dim}] for dim V = {V.dim}"
        )
    return res


@dataclass(frozen=True)
class EigenSplit:
    """Dimensions of E_-, E_0, E_+ for a restricted form, with the threshold rho."""

    minus: int
    zero: int
    plus: int
    rho: float


def eigen_split(L, U: Subspace, guard: float = GUARD_BAND) -> EigenSplit:
    """Split the restriction of L to U by comparing |eigenvalues| with rho(L).

    Eigenvalues within `guard` of +-rho count as large: for forms with all
    |eigenvalues| equal they occur structurally whenever U meets an eigenspace.
    """
    L = np.asarray(L, dtype=float)
    rho = float(np.min(np.abs(np.linalg.eigvalsh(L))))
    if U.dim == 0:
        return EigenSplit(0, 0, 0, rho)
    w = np.linalg.eigvalsh(U.basis.T @ L @ U.basis)
    small = np.abs(w) < rho - guard
    return EigenSplit(
        int(np.sum(~small & (w < 0))), int(np.sum(small)), int(np.sum(~small & (w > 0))), rho
    )


def count_small_eigs(L, U: Subspace) -> int:
    """Number of eigenvalues of the restriction of L to U lying in (-rho, rho)."""
    return eigen_split(L, U).zero


# ---------------------------------------------------------------- varieties

@dataclass(frozen=True)
class VarietyZ:
    """x_{2j-1} x_d = lam x_{2j} for 1 <= j <= floor((d-1)/2)."""

    d: int
    lam: float

    @property
    def equations(self) -> int:
        return (self.d - 1) // 2

    @property
    def dim(self) -> int:
        return ex.m_dim(self.d)

    def residuals(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        j = np.arange(self.equations)
        return x[..., 2 * j] * x[..., [self.d - 1]] - self.lam * x[..., 2 * j + 1]

    def contains(self, x, tol: float = 1e-12) -> bool:
        r = self.residuals(x)
        return bool(np.all(np.abs(r) <= tol * max(1.0, self.lam)))

    def distance(self, x) -> np.ndarray:
        """First-order distance: max_j |P_j(x)| / |grad P_j(x)|."""
        x = np.asarray(x, dtype=float)
        if self.equations == 0:
            return np.zeros(x.shape[:-1])
        r = self.residuals(x)
        j = np.arange(self.equations)
        xd = x[..., [self.d - 1]]
        grad = np.sqrt(xd**2 + self.lam**2 + x[..., 2 * j] ** 2)
        return np.max(np.abs(r) / grad, axis=-1)

    def slice_basis(self, xd: float) -> tuple[np.ndarray, np.ndarray]:
        """Affine description (offset 0, orthonormal basis) of the slice at height xd."""
        d = self.d
        cols = []
        for j in range(self.equations):
            v = np.zeros(d - 1)
            v[2 * j] = self.lam
            v[2 * j + 1] = xd
            cols.append(v / np.linalg.norm(v))
        if d % 2 == 0:  # the coordinate x_{d-1} is unconstrained when d is even
            v = np.zeros(d - 1)
            v[d - 2] = 1.0
            cols.append(v)
        B = np.array(cols).T if cols else np.zeros((d - 1, 0))
        return np.zeros(d - 1), B

    def sample_neighbourhood(self, c: float, radius: float, count: int, rng) -> np.ndarray:
        """Uniform-ish samples of N_c Z intersected with B(0, radius).

        Slices are affine subspaces, so points are drawn as slice points plus a
        normal offset of size at most c, then rejected outside the ball.
        """
        d = self.d
        out = []
        while sum(len(o) for o in out) < count:
            m = max(count, 64)
            xd = rng.uniform(-radius, radius, m)
            pts = np.empty((m, d))
            pts[:, -1] = xd
            for i in range(m):
                _, B = self.slice_basis(xd[i])
                t = rng.uniform(-radius, radius, B.shape[1])
                normal = Subspace(B).complement().basis if B.shape[1] else np.eye(d - 1)
                off = normal @ rng.uniform(-1, 1, normal.shape[1])
                off *= c * rng.uniform() ** (1 / max(1, normal.shape[1])) / max(np.linalg.norm(off), 1e-300)
                pts[i, :-1] = B @ t + off
            keep = np.linalg.norm(pts, axis=1) <= radius
            out.append(pts[keep])
        return np.concatenate(out)[:count]


def slice_volume(Z: VarietyZ, xd: float, c: float, radius: float, samples: int, rng) -> float:
    """Monte Carlo volume of N_c Z[xd] ∩ B(0, radius) inside R^{d-1} x {xd}."""
    d = Z.d
    r2 = radius**2 - xd**2
    if r2 <= 0:
        return 0.0
    r = np.sqrt(r2)
    _, B = Z.slice_basis(xd)
    k = B.shape[1]
    # sample a box around the slice: slice coordinates in [-r, r], normal ones in [-c, c]
    normal = Subspace(B).complement().basis if k else np.eye(d - 1)
    t = rng.uniform(-r, r, (samples, k))
    s = rng.uniform(-c, c, (samples, normal.shape[1]))
    pts = t @ B.T + s @ normal.T
    inside = (np.linalg.norm(s, axis=1) <= c) & (np.linalg.norm(pts, axis=1) <= r)
    box = (2 * r) ** k * (2 * c) ** normal.shape[1]
    return float(box * np.mean(inside))


# ---------------------------------------------------------------- randomness

def trial_rng(root: int, i: int) -> np.random.Generator:
    """Per-trial generator seeded with root XOR i."""
    return np.random.default_rng(int(root) ^ int(i))


def random_rotation(dim: int, rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def random_signature_form(n: int, sigma: int, rng) -> np.ndarray:
    """O I_{n-1,sigma} O^T for a Haar-random rotation O."""
    O = random_rotation(n - 1, rng)
    return (O * signature_diag(n, sigma)) @ O.T


def random_subspace(ambient: int, dim: int, rng) -> Subspace:
    if dim == 0:
        return Subspace.zero(ambient)
    q, _ = np.linalg.qr(rng.standard_normal((ambient, dim)))
    return Subspace(q)


# ---------------------------------------------------------------- fuzz campaign

@dataclass
class FuzzReport:
    n: int
    sigma: int
    dim_v: int
    trials: int
    seed: int
    rows: list = field(default_factory=list)
    resampled: int = 0

    @property
    def violations(self) -> int:
        return sum(1 for r in self.rows if not r["pass"])


def _draw_raw(n, m, rng):
    return (
        rng.standard_normal((n - 1, n - 1)),
        rng.standard_normal((n, m)),
        rng.standard_normal((n - 1, max(m - 1, 0))),
    )


def fuzz_campaign(n: int, sigma: int, dim_v: int, trials: int, seed: int) -> FuzzReport:
    """Random check of the auxiliary-subspace and small-eigenvalue bounds.

    Trial i draws, from its own generator seeded with seed XOR i, a form
    L = O I_{n-1,sigma} O^T, a Gaussian m-plane V in R^n and a Gaussian
    (m-1)-plane U in R^{n-1}; the linear algebra then runs in batch.
    """
    ex.check_pair(n, sigma)
    m = dim_v
    if not 1 <= m <= n:
        raise ParameterError(f"dim V must lie in [1, {n}], got {m}")
    report = FuzzReport(n, sigma, m, trials, seed)
    rngs = [trial_rng(seed, i) for i in range(trials)]
    raw = [_draw_raw(n, m, r) for r in rngs]
    GL = np.stack([r[0] for r in raw])
    GV = np.stack([r[1] for r in raw])
    GU = np.stack([r[2] for r in raw])
    Vs = _qr_q(GV)
    # resample the (measure-zero in theory) near-horizontal V
    bad = np.flatnonzero(np.linalg.norm(Vs[:, -1, :], axis=1) < np.sin(ANGLE_REJECT))
    for i in bad:
        while True:
            report.resampled += 1
            q = _qr_q(rngs[i].standard_normal((n, m))[None])[0]
            if np.linalg.norm(q[-1]) >= np.sin(ANGLE_REJECT):
                Vs[i] = q
                break
    O = _qr_q(GL)
    Ls = (O * signature_diag(n, sigma)) @ np.swapaxes(O, 1, 2)
    Us = _qr_q(GU) if m > 1 else GU
    aux_dims = batch_aux_dims(Ls, Vs)
    eig = batch_eigen_split(Ls, Us)
    lower = int(ex.mu(n, sigma, m).value)
    nu = int(ex.nu(n, sigma, m))
    pos = (n - 1 + sigma) // 2
    neg = n - 1 - pos
    ok = (
        (aux_dims >= lower) & (aux_dims <= n - m) & (eig[:, 1] <= nu)
        & (eig[:, 0] + eig[:, 1] <= neg) & (eig[:, 2] + eig[:, 1] <= pos)
    )
    report.rows = [
        {"trial": i, "dimV": m, "dimVaux": int(aux_dims[i]), "eigcount": int(eig[i, 1]),
         "bound": nu, "pass": bool(ok[i])}
        for i in range(trials)
    ]
    return report


def _qr_q(G: np.ndarray) -> np.ndarray:
    """Q factors of a stack of matrices, sign-normalised so the map is Haar."""
    if G.shape[-1] == 0:
        return G
    q, r = np.linalg.qr(G)
    s = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    s[s == 0] = 1.0
    return q * s[..., None, :]


def batch_aux_dims(Ls: np.ndarray, Vs: np.ndarray) -> np.ndarray:
    """dim (V_sl + L^{-1} V_sl)^perp for stacks of forms and orthonormal bases."""
    T, n, m = Vs.shape
    if m == 1:
        return np.full(T, n - 1)
    last = Vs[:, -1, :]  # T x m
    # orthonormal basis of the kernel of the last row, via Householder-like SVD
    _, _, vt = np.linalg.svd(last[:, None, :])
    kernel = np.swapaxes(vt[:, 1:, :], 1, 2)  # T x m x (m-1)
    W = Vs[:, :-1, :] @ kernel  # T x (n-1) x (m-1)
    Wt = np.linalg.solve(Ls, W)
    both = np.concatenate([W, Wt], axis=2)
    s = np.linalg.svd(both, compute_uv=False)
    rank = np.sum(s > RANK_TOL * np.maximum(1.0, s[:, :1]), axis=1)
    return (n - 1) - rank


def batch_eigen_split(Ls: np.ndarray, Us: np.ndarray) -> np.ndarray:
    T = Ls.shape[0]
    k = Us.shape[2]
    out = np.zeros((T, 3), dtype=int)
    if k == 0:
        return out
    rho = np.min(np.abs(np.linalg.eigvalsh(Ls)), axis=1)[:, None]
    w = np.linalg.eigvalsh(np.swapaxes(Us, 1, 2) @ Ls @ Us)
    a = np.abs(w)
    small = a < rho - GUARD_BAND
    out[:, 0] = np.sum(~small & (w < 0), axis=1)
    out[:, 1] = np.sum(small, axis=1)
    out[:, 2] = np.sum(~small & (w > 0), axis=1)
    return out
