"""Flat toy model for Floer strips and their gluing.

Target is C with J = i, boundary lines L0 = R (t = 0) and L1 = e^{i alpha} R
(t = 1), and an optional polynomial Hamiltonian H(x, y).  With X_H = -i grad H
the Floer equation reads

    F(u) = d_s u + i d_t u - grad H(u) = 0.

Discretization is the box scheme: F lives on cell centres, with centred
differences across each cell and corner averages for the zeroth-order term.
Unknowns are nodal values that satisfy the boundary conditions exactly.  A map
on a finite strip has one more column of data than the scheme has equations,
which matches the continuous operator being onto without end conditions.

Norms
-----
``norm_0p`` is the midpoint p-norm of a cell field.  ``sobolev_norm`` is the
trapezoid W^{1,p} norm of a nodal field.  Right inverse bounds and the distance
check after Newton use grid L^2 norms, where the minimum-norm right inverse has
an exactly computable operator norm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl

TRANSVERSE_MARGIN = 1e-3
DEFAULT_ETA = 0.05


class NumericsError(ValueError):
    pass


class IrregularError(NumericsError):
    """Linearized operator is not onto."""


class ConvergenceError(NumericsError):
    pass


# ---------------------------------------------------------------------------
# grids, problems and maps

@dataclass(frozen=True)
class Grid:
    s_lo: float
    s_hi: float
    n_s: int
    n_t: int

    def __post_init__(self):
        if self.n_s < 2 or self.n_t < 2:
            raise NumericsError("grid needs at least two nodes per direction")
        if not self.s_hi > self.s_lo:
            raise NumericsError("empty s-range")

    @classmethod
    def symmetric(cls, S: float, n_s: int, n_t: int) -> "Grid":
        return cls(-S, S, n_s, n_t)

    @classmethod
    def spaced(cls, s_lo: float, s_hi: float, hs: float, n_t: int) -> "Grid":
        n = (s_hi - s_lo) / hs
        if abs(n - round(n)) > 1e-6:
            raise NumericsError(f"s-range {s_lo}..{s_hi} is not a multiple of {hs}")
        return cls(s_lo, s_hi, int(round(n)) + 1, n_t)

    @property
    def hs(self) -> float:
        return (self.s_hi - self.s_lo) / (self.n_s - 1)

    @property
    def ht(self) -> float:
        return 1.0 / (self.n_t - 1)

    @property
    def s(self) -> np.ndarray:
        return np.linspace(self.s_lo, self.s_hi, self.n_s)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_t)

    def index(self, s: float) -> int:
        k = (s - self.s_lo) / self.hs
        if abs(k - round(k)) > 1e-6:
            raise NumericsError(f"s = {s} is not a grid point")
        return int(round(k))

    def to_dict(self) -> dict:
        return {"s_lo": self.s_lo, "s_hi": self.s_hi, "n_s": self.n_s, "n_t": self.n_t}


def cubic_hamiltonian(eta: float = DEFAULT_ETA) -> tuple:
    """H = eta (x^3/3 - x y^2), whose gradient is eta * conj(u)^2."""
    return (((3, 0), eta / 3.0), ((1, 2), -eta))


@dataclass(frozen=True)
class StripProblem:
    alpha: float
    hamiltonian: tuple = ()  # ((a, b), coeff) for coeff * x^a y^b
    p: float = 4.0
    patches: int = 1
    seam_angle: float = 0.0  # seam is the graph of rotation by this angle

    def __post_init__(self):
        if not 0.0 < self.alpha < math.pi:
            raise NumericsError("alpha must lie in (0, pi)")
        if min(self.alpha, math.pi - self.alpha) < TRANSVERSE_MARGIN:
            raise NumericsError("near-non-transverse boundary lines")
        if not self.p > 2:
            raise NumericsError("Sobolev exponent must exceed 2")
        if self.patches < 1:
            raise NumericsError("need at least one patch")

    @property
    def direction(self) -> complex:
        return complex(math.cos(self.alpha), math.sin(self.alpha))

    def grad(self, u: np.ndarray) -> np.ndarray:
        x, y = u.real, u.imag
        gx = np.zeros_like(x)
        gy = np.zeros_like(x)
        for (a, b), c in self.hamiltonian:
            if a:
                gx = gx + c * a * x ** (a - 1) * y ** b
            if b:
                gy = gy + c * b * x ** a * y ** (b - 1)
        return gx + 1j * gy

    def hessian(self, u: np.ndarray):
        x, y = u.real, u.imag
        hxx = np.zeros_like(x)
        hxy = np.zeros_like(x)
        hyy = np.zeros_like(x)
        for (a, b), c in self.hamiltonian:
            if a >= 2:
                hxx = hxx + c * a * (a - 1) * x ** (a - 2) * y ** b
            if a and b:
                hxy = hxy + c * a * b * x ** (a - 1) * y ** (b - 1)
            if b >= 2:
                hyy = hyy + c * b * (b - 1) * x ** a * y ** (b - 2)
        return hxx, hxy, hyy

    def to_dict(self) -> dict:
        return {"alpha": self.alpha,
                "hamiltonian": [[list(k), c] for k, c in self.hamiltonian],
                "p": self.p, "patches": self.patches, "seam_angle": self.seam_angle}


@dataclass
class DiscreteMap:
    grid: Grid
    values: np.ndarray  # complex, shape (n_s, n_t)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.n_s, self.grid.n_t):
            raise NumericsError(f"values shape {self.values.shape} does not match grid")

    def column(self, s: float) -> np.ndarray:
        return self.values[self.grid.index(s)]

    def restrict(self, s_lo: float, s_hi: float) -> "DiscreteMap":
        i, j = self.grid.index(s_lo), self.grid.index(s_hi)
        return DiscreteMap(Grid(s_lo, s_hi, j - i + 1, self.grid.n_t), self.values[i:j + 1].copy())


def boundary_defect(problem: StripProblem, u: DiscreteMap) -> float:
    """Largest distance of the boundary rows from their lines."""
    lo = np.abs(u.values[:, 0].imag).max()
    hi = np.abs((u.values[:, -1] * np.conj(problem.direction)).imag).max()
    return float(max(lo, hi))


# ---------------------------------------------------------------------------
# analytic and discrete solutions of the linear problem

def exact_modes(alpha: float, coeffs: dict, grid: Grid) -> DiscreteMap:
    """Sample u(z) = sum_k c_k exp((alpha + k pi) z) with z = s + i t."""
    if not coeffs:
        raise NumericsError("no modes given")
    z = grid.s[:, None] + 1j * grid.t[None, :]
    vals = np.zeros(z.shape, dtype=complex)
    for k, c in sorted(coeffs.items()):
        if complex(c).imag:
            raise NumericsError("mode coefficients must be real")
        vals += float(np.real(c)) * np.exp((alpha + k * math.pi) * z)
    return DiscreteMap(grid, vals)


def mode_rate(alpha: float, k: int) -> float:
    return alpha + k * math.pi


def _column_basis(n_t: int, alpha: float) -> np.ndarray:
    """Columns: real parameters of one boundary-respecting column -> C^{n_t}."""
    m = 2 * n_t - 2
    B = np.zeros((n_t, m), dtype=complex)
    B[0, 0] = 1.0
    for j in range(1, n_t - 1):
        B[j, 2 * j - 1] = 1.0
        B[j, 2 * j] = 1j
    B[n_t - 1, m - 1] = complex(math.cos(alpha), math.sin(alpha))
    return B


def _transfer(alpha: float, hs: float, n_t: int):
    """Box-scheme column map u_{i+1} = T u_i for the linear problem, in real parameters."""
    ht = 1.0 / (n_t - 1)
    B = _column_basis(n_t, alpha)
    avg = 0.5 * (B[:-1] + B[1:])
    dif = (B[1:] - B[:-1]) / ht
    # cell equation: (u'-u)/hs * avg + i (u'+u)/2 * dif = 0
    Mc = avg / hs + 0.5j * dif
    Nc = avg / hs - 0.5j * dif
    real = lambda Z: np.vstack([Z.real, Z.imag])
    return np.linalg.solve(real(Mc), real(Nc)), B


def discrete_modes(alpha: float, coeffs: dict, grid: Grid) -> DiscreteMap:
    """Exact solutions of the discrete linear problem.

    Mode k is the transfer-matrix eigenvector whose growth rate is closest to
    alpha + k pi, normalized to be real at the corner (s, t) = (0, 0) with the
    same value as the analytic mode there.
    """
    if not coeffs:
        raise NumericsError("no modes given")
    T, B = _transfer(alpha, grid.hs, grid.n_t)
    w, V = np.linalg.eig(T)
    rates = np.log(np.abs(w)) / grid.hs
    vals = np.zeros((grid.n_s, grid.n_t), dtype=complex)
    for k, c in sorted(coeffs.items()):
        target = mode_rate(alpha, k)
        q = int(np.argmin(np.abs(rates - target)))
        if abs(w[q].imag) > 1e-9 * abs(w[q]) or w[q].real <= 0:
            raise NumericsError(f"mode {k} is not resolved on this grid")
        v = np.real_if_close(V[:, q]).real
        col = B @ v
        ref = col[0].real if abs(col[0]) > 1e-12 else np.abs(col).max()
        col = col / ref
        # s = 0 may lie off-grid; scale from s_lo
        powers = w[q].real ** ((grid.s - 0.0) / grid.hs)
        vals += float(np.real(c)) * powers[:, None] * col[None, :]
    return DiscreteMap(grid, vals)


def discrete_rate(alpha: float, k: int, hs: float, n_t: int) -> float:
    T, _ = _transfer(alpha, hs, n_t)
    w = np.linalg.eigvals(T)
    rates = np.log(np.abs(w)) / hs
    return float(rates[np.argmin(np.abs(rates - mode_rate(alpha, k)))])


# ---------------------------------------------------------------------------
# residual

def _cells(v: np.ndarray):
    ds = (v[1:, :-1] + v[1:, 1:] - v[:-1, :-1] - v[:-1, 1:])
    dt = (v[:-1, 1:] + v[1:, 1:] - v[:-1, :-1] - v[1:, :-1])
    avg = 0.25 * (v[:-1, :-1] + v[:-1, 1:] + v[1:, :-1] + v[1:, 1:])
    return ds, dt, avg


def _field(problem: StripProblem, v: np.ndarray, hs: float, ht: float, j_sign: int = 1):
    """Cell residual with complex structure j_sign * i."""
    ds, dt, avg = _cells(v)
    out = ds / (2 * hs) + j_sign * 1j * dt / (2 * ht)
    if problem.hamiltonian:
        out = out - problem.grad(avg)
    return out


def norm_0p(field: np.ndarray, grid: Grid, p: float) -> float:
    w = grid.hs * grid.ht
    return float((w * np.sum(np.abs(field) ** p)) ** (1.0 / p))


def residual(problem: StripProblem, u: DiscreteMap):
    """Cell field of F(u) and its 0,p norm."""
    g = u.grid
    if u.values.shape != (g.n_s, g.n_t):
        raise NumericsError("shape mismatch")
    f = _field(problem, u.values, g.hs, g.ht)
    return f, norm_0p(f, g, problem.p)


def residual_quilted(problem: StripProblem, patches: Sequence[DiscreteMap], folded: bool = False):
    """Per-patch residual fields of a quilted strip.

    With ``folded`` the arrays are in product coordinates: even patches are
    reflected in t, so their factor carries -J and the Hamiltonian vector field
    changes sign.  Fields are returned in the coordinates of the input.
    """
    if len(patches) != problem.patches:
        raise NumericsError("need one map per patch")
    out = []
    for m, u in enumerate(patches, start=1):
        g = u.grid
        v = u.values
        sign = -1 if folded and m % 2 == 0 else 1
        out.append(_field(problem, v, g.hs, g.ht, sign))
    return out


def seam_defect(problem: StripProblem, patches: Sequence[DiscreteMap]) -> float:
    """Largest violation of the seam condition u_{m+1}(s, 0) = e^{i theta} u_m(s, 1)."""
    rot = complex(math.cos(problem.seam_angle), math.sin(problem.seam_angle))
    worst = 0.0
    for a, b in zip(patches, patches[1:]):
        worst = max(worst, float(np.abs(b.values[:, 0] - rot * a.values[:, -1]).max()))
    return worst


# ---------------------------------------------------------------------------
# energy and decay

@dataclass
class EnergyProfile:
    e: np.ndarray
    f: np.ndarray
    E: float
    kappa: float
    window: tuple

    def to_dict(self) -> dict:
        return {"E": self.E, "kappa": self.kappa, "window": list(self.window),
                "f": [float(x) for x in self.f]}


def _trap(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def energy_density(u: DiscreteMap) -> np.ndarray:
    g = u.grid
    du = np.gradient(u.values, g.hs, axis=0, edge_order=2)
    return np.abs(du) ** 2


def energy(u: DiscreteMap, s_lo: Optional[float] = None, s_hi: Optional[float] = None) -> float:
    """Trapezoid energy over the grid columns with s_lo <= s <= s_hi."""
    g = u.grid
    lo = g.s_lo if s_lo is None else s_lo
    hi = g.s_hi if s_hi is None else s_hi
    i = max(0, math.ceil((lo - g.s_lo) / g.hs - 1e-9))
    j = min(g.n_s - 1, math.floor((hi - g.s_lo) / g.hs + 1e-9))
    if j <= i:
        return 0.0
    e = energy_density(u)[i:j + 1]
    return float(_trap(j - i + 1, g.hs) @ e @ _trap(g.n_t, g.ht))


def _interior(g: Grid, window) -> tuple:
    if window is None:
        span = g.s_hi - g.s_lo
        return (g.s_lo + span / 4, g.s_hi - span / 4)
    return tuple(window)


def energy_profile(u: DiscreteMap, window=None) -> EnergyProfile:
    g = u.grid
    dt = np.gradient(u.values, g.ht, axis=1, edge_order=2)
    f = 0.5 * (np.abs(dt) ** 2) @ _trap(g.n_t, g.ht)
    e = energy_density(u)
    E = float(_trap(g.n_s, g.hs) @ e @ _trap(g.n_t, g.ht))
    lo, hi = _interior(g, window)
    mask = (g.s >= lo - 1e-12) & (g.s <= hi + 1e-12)
    if np.any(f[mask] < 1e-14):
        raise NumericsError("energy density too small for a decay fit")
    slope = np.polyfit(g.s[mask], np.log(f[mask]), 1)[0]
    return EnergyProfile(e, f, E, float(abs(slope)), (lo, hi))


def check_convexity(u: DiscreteMap, window=None) -> float:
    """Minimum of f''/f over the window, by second differences."""
    prof = energy_profile(u, window)
    g = u.grid
    f = prof.f
    lo, hi = prof.window
    out = np.inf
    for i in range(1, g.n_s - 1):
        if lo - 1e-12 <= g.s[i] <= hi + 1e-12:
            fpp = (f[i + 1] - 2 * f[i] + f[i - 1]) / g.hs ** 2
            out = min(out, fpp / f[i])
    return float(out)


def check_quantization(u: DiscreteMap, T: float, kappa: Optional[float] = None):
    """(E on the strip shortened by T at both ends, e^{-kappa T} E)."""
    g = u.grid
    if kappa is None:
        kappa = energy_profile(u).kappa
    E0 = energy(u)
    lo, hi = g.s_lo + T, g.s_hi - T
    if not hi > lo:
        raise NumericsError("T exceeds half the strip length")
    return energy(u, lo, hi), math.exp(-kappa * T) * E0


# ---------------------------------------------------------------------------
# pregluing

BETA_COEFFS = (1.0, 0.0, 0.0, -10.0, 15.0, -6.0)  # in x = s + 1 on [0, 1]


def cutoff(s) -> np.ndarray:
    """C^2 quintic step: 1 for s <= -1, 0 for s >= 0."""
    x = np.clip(np.asarray(s, dtype=float) + 1.0, 0.0, 1.0)
    return np.polynomial.polynomial.polyval(x, BETA_COEFFS)


def preglue(u1: DiscreteMap, u2: DiscreteMap, R: float, kind: int = 3,
            s_hi: Optional[float] = None, tol: float = 1e-3) -> DiscreteMap:
    """Cut off u1 past R/2 and u2 before -R/2, then place u2 shifted by 2R.

    u1 must converge to the intersection point as s grows and u2 as s falls.
    In the flat strip model the three gluing types share this formula; they
    differ only in which piece carries the moduli parameter.
    """
    if kind not in (1, 2, 3):
        raise NumericsError("gluing type must be 1, 2 or 3")
    g1, g2 = u1.grid, u2.grid
    if abs(g1.hs - g2.hs) > 1e-12 or g1.n_t != g2.n_t:
        raise NumericsError("pieces live on different grids")
    hs = g1.hs
    for end in (u1.values[-1], u2.values[0]):
        if np.abs(end).max() > tol:
            raise NumericsError("endpoint mismatch: piece does not reach the intersection point")
    if g1.s_hi < R / 2 - 1e-9 or g2.s_lo > -R / 2 + 1e-9:
        raise NumericsError("pieces too short for this gluing length")
    top = 2 * R + g2.s_hi if s_hi is None else s_hi
    if top - 2 * R > g2.s_hi + 1e-9:
        raise NumericsError("second piece does not cover the requested domain")
    grid = Grid.spaced(g1.s_lo, top, hs, g1.n_t)
    s = grid.s
    out = np.zeros((grid.n_s, grid.n_t), dtype=complex)
    b1 = cutoff(s - R / 2)
    m1 = (s <= g1.s_hi + 1e-9) & (b1 > 0)
    idx1 = np.rint((s[m1] - g1.s_lo) / hs).astype(int)
    out[m1] += b1[m1, None] * u1.values[idx1]
    b2 = cutoff(-s + 3 * R / 2)
    m2 = (s - 2 * R >= g2.s_lo - 1e-9) & (b2 > 0)
    idx2 = np.rint((s[m2] - 2 * R - g2.s_lo) / hs).astype(int)
    if np.any(np.abs(idx2 * hs + g2.s_lo + 2 * R - s[m2]) > 1e-6):
        raise NumericsError("2R is not a multiple of the grid spacing")
    out[m2] += b2[m2, None] * u2.values[idx2]
    return DiscreteMap(grid, out)


# ---------------------------------------------------------------------------
# linearization

def _stencils(grid: Grid):
    ns, nt = grid.n_s, grid.n_t
    ci, cj = np.meshgrid(np.arange(ns - 1), np.arange(nt - 1), indexing="ij")
    cell = (ci * (nt - 1) + cj).ravel()
    rows, cols, ds, dt = [], [], [], []
    for a in (0, 1):
        for b in (0, 1):
            rows.append(cell)
            cols.append(((ci + a) * nt + cj + b).ravel())
            ds.append(np.full(cell.size, (1.0 if a else -1.0) / (2 * grid.hs)))
            dt.append(np.full(cell.size, (1.0 if b else -1.0) / (2 * grid.ht)))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    shape = ((ns - 1) * (nt - 1), ns * nt)
    S = sp.csr_matrix((np.concatenate(ds), (rows, cols)), shape=shape)
    T = sp.csr_matrix((np.concatenate(dt), (rows, cols)), shape=shape)
    A = sp.csr_matrix((np.full(rows.size, 0.25), (rows, cols)), shape=shape)
    return S, T, A


def boundary_basis(problem: StripProblem, grid: Grid) -> sp.csr_matrix:
    """Isometry from real variations respecting the boundary lines to (Re u, Im u)."""
    ns, nt = grid.n_s, grid.n_t
    N = ns * nt
    B = _column_basis(nt, problem.alpha)
    m = B.shape[1]
    rows, cols, vals = [], [], []
    for j in range(nt):
        for q in np.nonzero(B[j])[0]:
            z = B[j, q]
            for part, off in ((z.real, 0), (z.imag, N)):
                if part:
                    rows.append(np.arange(ns) * nt + j + off)
                    cols.append(np.arange(ns) * m + q)
                    vals.append(np.full(ns, part))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(2 * N, ns * m))


def linearize(problem: StripProblem, u: DiscreteMap) -> sp.csr_matrix:
    """Jacobian of the real cell residual [Re F; Im F] in boundary-respecting variables."""
    g = u.grid
    S, T, A = _stencils(g)
    blocks = [[S, -T], [T, S]]
    if problem.hamiltonian:
        hxx, hxy, hyy = (h.ravel() for h in problem.hessian(_cells(u.values)[2]))
        blocks = [[S - sp.diags(hxx) @ A, -T - sp.diags(hxy) @ A],
                  [T - sp.diags(hxy) @ A, S - sp.diags(hyy) @ A]]
    D = sp.bmat(blocks, format="csr")
    return (D @ boundary_basis(problem, g)).tocsr()


def _real(field: np.ndarray) -> np.ndarray:
    f = field.ravel()
    return np.concatenate([f.real, f.imag])


def _apply(problem: StripProblem, u: DiscreteMap, y: np.ndarray) -> DiscreteMap:
    g = u.grid
    N = g.n_s * g.n_t
    v = boundary_basis(problem, g) @ y
    return DiscreteMap(g, u.values + (v[:N] + 1j * v[N:]).reshape(g.n_s, g.n_t))


def to_variables(problem: StripProblem, values: np.ndarray) -> np.ndarray:
    return boundary_basis(problem, Grid(0.0, 1.0, *values.shape)).T @ np.concatenate(
        [values.real.ravel(), values.imag.ravel()])


def right_inverse_bound(problem: StripProblem, u: DiscreteMap) -> float:
    """Norm of the minimum-norm right inverse, 1 / smallest singular value."""
    D = linearize(problem, u)
    M = (D @ D.T).tocsc()
    try:
        lu = spl.splu(M)
    except RuntimeError:
        raise IrregularError("irregular configuration") from None
    op = spl.LinearOperator(M.shape, matvec=lu.solve, dtype=float)
    v0 = np.ones(M.shape[0])
    top = spl.eigsh(op, k=1, which="LM", v0=v0, return_eigenvectors=False)[0]
    if not np.isfinite(top) or top <= 0:
        raise IrregularError("irregular configuration")
    return float(math.sqrt(top))


# ---------------------------------------------------------------------------
# Newton

def _grid_l2(x: np.ndarray, grid: Grid) -> float:
    return float(math.sqrt(grid.hs * grid.ht) * np.linalg.norm(x))


def correct(problem: StripProblem, u: DiscreteMap, tol: float = 1e-12, max_iter: int = 20) -> DiscreteMap:
    """Newton with minimum-norm steps at the current point."""
    for _ in range(max_iter):
        F = _real(residual(problem, u)[0])
        if np.abs(F).max() < tol:
            return u
        D = linearize(problem, u)
        try:
            z = spl.splu((D @ D.T).tocsc()).solve(-F)
        except RuntimeError:
            raise IrregularError("irregular configuration") from None
        u = _apply(problem, u, D.T @ z)
    if np.abs(_real(residual(problem, u)[0])).max() < tol:
        return u
    raise ConvergenceError("Newton did not converge")


@dataclass
class GluingReport:
    R: float
    pregluing_residual: float
    C_hat: float
    c_hat: Optional[float]
    residuals: list
    distance: float
    ift_bound: float
    converged: bool
    bound_ok: bool

    def to_dict(self) -> dict:
        return {"R": self.R, "pregluing_residual": self.pregluing_residual, "C_hat": self.C_hat,
                "c_hat": self.c_hat, "residuals": list(self.residuals), "distance": self.distance,
                "ift_bound": self.ift_bound, "converged": self.converged, "bound_ok": self.bound_ok}


def _solve_in_image(problem: StripProblem, base: DiscreteMap, start: DiscreteMap, DR,
                    tol: float, max_iter: int):
    """Newton on y -> F(start + Q_R y): every step stays in the image of Q_R."""
    u = start
    history = []
    for _ in range(max_iter + 1):
        F = _real(residual(problem, u)[0])
        history.append(float(np.abs(F).max()))
        if history[-1] < tol:
            return u, history
        D = linearize(problem, u)
        try:
            z = spl.splu((D @ DR.T).tocsc()).solve(-F)
        except RuntimeError:
            raise IrregularError("irregular configuration") from None
        if not np.all(np.isfinite(z)):
            raise IrregularError("irregular configuration")
        u = _apply(problem, u, DR.T @ z)
    raise ConvergenceError(f"Newton did not reach {tol} in {max_iter} steps")


def newton_glue(problem: StripProblem, u_R: DiscreteMap, tol: float = 1e-10, max_iter: int = 20,
                R: float = float("nan"), quadratic_samples: int = 0, seed: int = 0):
    """Correct a preglued map to a solution, with corrections in the image of Q_R."""
    DR = linearize(problem, u_R)
    C = right_inverse_bound(problem, u_R)
    F0 = residual(problem, u_R)
    u, history = _solve_in_image(problem, u_R, u_R, DR, tol, max_iter)
    dist = _grid_l2(u.values - u_R.values, u_R.grid)
    f_l2 = _grid_l2(F0[0], u_R.grid)
    bound = 2 * C * f_l2
    c_hat = quadratic_probe(problem, u_R, quadratic_samples, seed=seed) if quadratic_samples else None
    report = GluingReport(R, F0[1], C, c_hat, history, dist, bound, True, dist <= bound + 1e-15)
    return u, report


# ---------------------------------------------------------------------------
# trial fields, Sobolev norms, quadratic and embedding constants

def sobolev_norm(values: np.ndarray, grid: Grid, p: float) -> float:
    ds = np.gradient(values, grid.hs, axis=0, edge_order=2)
    dt = np.gradient(values, grid.ht, axis=1, edge_order=2)
    dens = np.abs(values) ** p + np.abs(ds) ** p + np.abs(dt) ** p
    return float((_trap(grid.n_s, grid.hs) @ dens @ _trap(grid.n_t, grid.ht)) ** (1.0 / p))


def trial_field(rng: np.random.Generator, grid: Grid, alpha: float, n_modes: int = 2) -> np.ndarray:
    """Random boundary-compatible field: a bump in s times a short mode sum in t."""
    width = rng.uniform(0.75, 1.5)
    room = max(0.0, (grid.s_hi - grid.s_lo) / 2 - 3 * width)
    centre = (grid.s_lo + grid.s_hi) / 2 + rng.uniform(-room, room)
    ks = np.arange(-n_modes, n_modes + 1)
    coeffs = rng.normal(size=ks.size) / (1.0 + np.abs(ks))
    t = grid.t
    profile = sum(c * np.exp(1j * (alpha + k * math.pi) * t) for k, c in zip(ks, coeffs))
    env = np.exp(-((grid.s - centre) / width) ** 2)
    return env[:, None] * profile[None, :]


def embedding_constant(S: float, p: float = 4.0, n_trials: int = 200, seed: int = 0,
                       hs: float = 0.1, n_t: int = 17, alpha: float = math.pi / 2) -> float:
    """Largest observed sup|f| / |f|_{1,p} on [-S, S] x [0, 1]."""
    grid = Grid.spaced(-S, S, hs, n_t)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_trials):
        f = trial_field(rng, grid, alpha)
        best = max(best, float(np.abs(f).max()) / sobolev_norm(f, grid, p))
    return best


def quadratic_samples(problem: StripProblem, grid: Grid, n_samples: int, radius: float, seed: int):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_samples):
        xi = trial_field(rng, grid, problem.alpha)
        xi *= radius / sobolev_norm(xi, grid, problem.p)
        out.append(xi)
    return out


def quadratic_probe(problem: StripProblem, u: DiscreteMap, n_samples: int = 20,
                    radius: float = 0.1, seed: int = 0) -> float:
    """max over samples of |dF(u + xi) - dF(u)| / |xi|_{1,p}.

    dF(u + xi) - dF(u) is multiplication by the change in the Hessian of H at
    the cell averages; its size is the largest pointwise spectral norm, which
    bounds the operator on every L^p.
    """
    if not problem.hamiltonian:
        return 0.0
    g = u.grid
    base = problem.hessian(_cells(u.values)[2])
    best = 0.0
    for xi in quadratic_samples(problem, g, n_samples, radius, seed):
        new = problem.hessian(_cells(u.values + xi)[2])
        a, b, c = (n - o for n, o in zip(new, base))
        # spectral norm of [[a, b], [b, c]]
        norm = np.abs((a + c) / 2) + np.sqrt(((a - c) / 2) ** 2 + b ** 2)
        best = max(best, float(norm.max()) / sobolev_norm(xi, g, problem.p))
    return best


# ---------------------------------------------------------------------------
# Gromov neighbourhoods and surjectivity

@dataclass
class BrokenPair:
    lower: DiscreteMap  # converges to the intersection point as s -> +inf
    upper: DiscreteMap  # converges to it as s -> -inf
    kind: int = 3


@dataclass
class Membership:
    member: bool
    diagnostics: dict

    @property
    def failed(self) -> list:
        return sorted(k for k, v in self.diagnostics.items() if not v["ok"])


def _sup_on(u: DiscreteMap, v: DiscreteMap, shift: float, lo: float, hi: float) -> Optional[float]:
    """sup |u(s + shift) - v(s)| for grid s of v in [lo, hi]; None if u does not cover it."""
    gv, gu = v.grid, u.grid
    s = gv.s
    mask = (s >= lo - 1e-9) & (s <= hi + 1e-9)
    if not mask.any():
        return 0.0
    target = s[mask] + shift
    if target.min() < gu.s_lo - 1e-9 or target.max() > gu.s_hi + 1e-9:
        return None
    idx = np.rint((target - gu.s_lo) / gu.hs).astype(int)
    return float(np.abs(u.values[idx] - v.values[mask]).max())


def gromov_membership(broken: BrokenPair, candidate: Optional[tuple], eps: float) -> Membership:
    """Test the neighbourhood conditions; ``candidate`` is (R, map) or None for the limit."""
    if candidate is None:
        diag = {k: {"value": 0.0, "ok": True} for k in ("parameter", "energy", "lower", "upper")}
        return Membership(True, diag)
    R, u = candidate
    E_broken = energy(broken.lower) + energy(broken.upper)
    diag = {"energy": {"value": abs(E_broken - energy(u))}}
    diag["energy"]["ok"] = diag["energy"]["value"] < eps
    if broken.kind in (1, 2):
        delta = math.exp(-R)
        diag["parameter"] = {"value": delta, "ok": delta < eps}
        low = _sup_on(u, broken.lower, 0.0, -math.inf, R)
        diag["lower"] = {"value": low, "ok": low is not None and low < eps}
        up = _sup_on(u, broken.upper, 2 * R, -R, math.inf)
        diag["upper"] = {"value": up, "ok": up is not None and up < eps}
    else:
        Re = -math.log(eps)
        diag["parameter"] = {"value": 0.0, "ok": True}
        low = _sup_on(u, broken.lower, 0.0, -math.inf, Re)
        diag["lower"] = {"value": low, "ok": low is not None and low < eps}
        best, best_tau = None, None
        hs = u.grid.hs
        k0 = math.ceil((2 * Re - 1e-9) / hs)
        k = k0
        while k * hs + broken.upper.grid.s_lo <= u.grid.s_hi + 1e-9 or k == k0:
            tau = k * hs
            val = _sup_on(u, broken.upper, tau, -Re, Re)
            if val is not None and (best is None or val < best):
                best, best_tau = val, tau
            k += 1
            if k - k0 > 100000:
                break
        diag["shift"] = {"value": best, "tau": best_tau, "ok": best is not None and best < eps}
    return Membership(all(v["ok"] for v in diag.values()), diag)


@dataclass
class SurjectivityReport:
    eps: float
    max_distance: float
    candidates: list
    outliers: list
    warnings: list

    @property
    def passed(self) -> bool:
        return not self.outliers

    def to_dict(self) -> dict:
        return {"eps": self.eps, "max_distance": self.max_distance, "candidates": self.candidates,
                "outliers": self.outliers, "warnings": self.warnings, "passed": self.passed}


def _overlap_sup(a: DiscreteMap, b: DiscreteMap) -> float:
    """sup |a - b| over the common columns of two grids sharing s_lo and spacing."""
    n = min(a.grid.n_s, b.grid.n_s)
    return float(np.abs(a.values[:n] - b.values[:n]).max())


def surjectivity_probe(problem: StripProblem, broken: BrokenPair, R_values: Sequence[float],
                       eps: float, n_candidates: int = 50, seed: int = 0,
                       threshold: float = 1e-6, tol: float = 1e-11) -> SurjectivityReport:
    """Newton solutions seeded near preglued curves, compared with the glued family.

    Each start is u_R + Q_R y with sup-size at most eps/4, so it lies in the
    slice where the glued solution is unique.  Family members live on
    domains of different length and are compared on their common part.
    """
    warnings = []
    if not R_values or n_candidates <= 0:
        warnings.append("no candidates generated")
        return SurjectivityReport(eps, 0.0, [], [], warnings)
    if eps >= 0.5:
        warnings.append("eps outside the small-neighbourhood regime; outliers are flagged only")
    family = {}
    pre = {}
    for R in R_values:
        uR = preglue(broken.lower, broken.upper, R, broken.kind)
        pre[R] = (uR, linearize(problem, uR))
        family[R] = _solve_in_image(problem, uR, uR, pre[R][1], tol, 30)[0]
    rng = np.random.default_rng(seed)
    rows, outliers = [], []
    for n in range(n_candidates):
        R0 = R_values[int(rng.integers(len(R_values)))]
        uR, DR = pre[R0]
        y = DR.T @ rng.normal(size=DR.shape[0])
        size = np.abs(boundary_basis(problem, uR.grid) @ y).max()
        scale = rng.uniform(0.5, 1.0) * (eps / 4) / size
        start = _apply(problem, uR, scale * y)
        sol, _ = _solve_in_image(problem, uR, start, DR, tol, 30)
        dists = {R: _overlap_sup(sol, family[R]) for R in R_values}
        R_star = min(dists, key=lambda r: (dists[r], r))
        member = gromov_membership(broken, (R0, sol), eps).member
        rows.append({"index": n, "R_start": R0, "R_star": R_star, "distance": dists[R_star],
                     "in_neighbourhood": member})
        if dists[R_star] > threshold:
            outliers.append(n)
    return SurjectivityReport(eps, max(r["distance"] for r in rows), rows, outliers, warnings)
