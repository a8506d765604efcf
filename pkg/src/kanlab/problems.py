"""Benchmark problems and data generation.

Two separable 2D target functions, Latin hypercube sampling, a spectral
reference solver for the periodic reaction-diffusion benchmark, a
Gaussian-random-field sampler, the periodic viscous Burgers solver, and
the builders that wire these into trainer terms and evaluation hooks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diag import SNRProbe, relative_l2
from .diffcore import DTYPE, Jet2
from .seeding import child_rng
from .train import Term, residual_allen_cahn, residual_data

NU_BURGERS = 1.0 / (100.0 * np.pi)
AC_KAPPA = 1e-4
UNIT_BOX = ((-1.0, 1.0), (-1.0, 1.0))


# ---------------------------------------------------------------------------
# target functions
# ---------------------------------------------------------------------------

def h_discontinuous(x):
    """5 + sum_{k<=4} sin(kx) left of 0.5, cos(10x) from 0.5 on."""
    x = np.asarray(x, dtype=DTYPE)
    left = 5.0 + sum(np.sin(k * x) for k in range(1, 5))
    return np.where(x < 0.5, left, np.cos(10.0 * x))


def h_smooth(x):
    x = np.asarray(x, dtype=DTYPE)
    out = np.sin(x)
    for k in (3, 5, 7):
        out = out + np.sin(k * np.pi * x) / k
    return out


@dataclass(frozen=True)
class TargetFunction:
    """Separable 2D target f(x1, x2) = h(x1) h(x2) on a box."""

    kind: str
    box: tuple = UNIT_BOX

    def h(self, x):
        if self.kind == "discontinuous":
            return h_discontinuous(x)
        return h_smooth(x)

    def __call__(self, x1, x2):
        return self.h(x1) * self.h(x2)


def target(kind: str) -> TargetFunction:
    if kind not in ("discontinuous", "smooth"):
        raise ValueError(f"unknown target {kind!r}")
    return TargetFunction(kind)


def eval_discontinuous(x1, x2):
    return h_discontinuous(x1) * h_discontinuous(x2)


def eval_smooth(x1, x2):
    return h_smooth(x1) * h_smooth(x2)


# ---------------------------------------------------------------------------
# point sampling
# ---------------------------------------------------------------------------

def latin_hypercube(n: int, box, rng) -> np.ndarray:
    """n points with exactly one sample per axis-aligned bin per dimension."""
    if n < 1:
        raise ValueError("need at least one point")
    box = np.asarray(box, dtype=DTYPE)
    out = np.empty((n, box.shape[0]), dtype=DTYPE)
    for j, (lo, hi) in enumerate(box):
        cells = rng.permutation(n)
        out[:, j] = lo + (hi - lo) * (cells + rng.uniform(size=n)) / n
    return out


def fa_training_data(kind: str, n: int, seed: int):
    tf = target(kind)
    X = latin_hypercube(n, tf.box, child_rng(seed, "fa", kind, "lhs"))
    return X, tf(X[:, [0]], X[:, [1]])


def fa_test_grid(kind: str, n: int = 64):
    tf = target(kind)
    g1 = np.linspace(*tf.box[0], n)
    g2 = np.linspace(*tf.box[1], n)
    a, b = np.meshgrid(g1, g2, indexing="ij")
    X = np.column_stack([a.ravel(), b.ravel()])
    return X, tf(X[:, [0]], X[:, [1]])


# ---------------------------------------------------------------------------
# periodic spectral helpers
# ---------------------------------------------------------------------------

def _fourier_eval(vhat: np.ndarray, frac) -> np.ndarray:
    """Evaluate the trig interpolant of one period at fractional positions.

    vhat: forward FFT of n equispaced samples; frac: positions as a
    fraction of the period. Rows of a 2D vhat are separate snapshots.
    """
    vhat = np.atleast_2d(vhat)
    n = vhat.shape[1]
    k = np.fft.fftfreq(n, d=1.0 / n)
    E = np.exp(2j * np.pi * np.outer(np.asarray(frac, dtype=DTYPE), k))
    out = (vhat @ E.T).real / n
    return out[0] if out.shape[0] == 1 else out


# ---------------------------------------------------------------------------
# reaction-diffusion reference solver
# ---------------------------------------------------------------------------

def allen_cahn_ic(x):
    x = np.asarray(x, dtype=DTYPE)
    return x ** 2 * np.cos(np.pi * x)


def allen_cahn_reference(n_modes: int = 2048, dt: float = 1e-3, *,
                         nx_out: int = 201, nt_out: int = 501,
                         t_end: float = 1.0, kappa: float = AC_KAPPA,
                         ic=allen_cahn_ic):
    """Fourier pseudo-spectral ETDRK4 solve of
    u_t = kappa u_xx - 5(u^3 - u) on periodic [-1, 1], starting from the
    polynomial-times-cosine state unless another ic callable is given.

    Returns (t, x, U) with U of shape (nt_out, nx_out); x spans [-1, 1]
    inclusive via trigonometric interpolation off the solver grid.
    """
    if n_modes < 4 or n_modes & (n_modes - 1):
        raise ValueError("n_modes must be a power of two")
    n_snap = nt_out - 1
    per_snap = t_end / n_snap / dt
    steps_per_snap = int(round(per_snap))
    if steps_per_snap < 1 or abs(per_snap - steps_per_snap) > 1e-9:
        raise ValueError("snapshot spacing must be a whole number of dt steps")

    xs = -1.0 + 2.0 * np.arange(n_modes) / n_modes
    q = 2.0 * np.pi * np.fft.fftfreq(n_modes, d=2.0 / n_modes)
    lin = -kappa * q ** 2 + 5.0
    e_full = np.exp(dt * lin)
    e_half = np.exp(0.5 * dt * lin)
    # contour quadrature keeps the phi-weights stable near lin = 0
    roots = np.exp(1j * np.pi * (np.arange(32) + 0.5) / 32)
    lr = dt * lin[:, None] + roots[None, :]
    f0 = dt * np.real(np.mean((np.exp(lr / 2) - 1) / lr, axis=1))
    f1 = dt * np.real(np.mean(
        (-4 - lr + np.exp(lr) * (4 - 3 * lr + lr ** 2)) / lr ** 3, axis=1))
    f2 = dt * np.real(np.mean((2 + lr + np.exp(lr) * (lr - 2)) / lr ** 3, axis=1))
    f3 = dt * np.real(np.mean(
        (-4 - 3 * lr - lr ** 2 + np.exp(lr) * (4 - lr)) / lr ** 3, axis=1))

    def nonlin(vh):
        v = np.fft.ifft(vh).real
        return np.fft.fft(-5.0 * v ** 3)

    vhat = np.fft.fft(np.broadcast_to(ic(xs), xs.shape).astype(DTYPE))
    snaps = np.empty((nt_out, n_modes), dtype=complex)
    snaps[0] = vhat
    for s in range(1, nt_out):
        for _ in range(steps_per_snap):
            n0 = nonlin(vhat)
            a = e_half * vhat + f0 * n0
            na = nonlin(a)
            b = e_half * vhat + f0 * na
            nb = nonlin(b)
            c = e_half * a + f0 * (2 * nb - n0)
            nc = nonlin(c)
            vhat = e_full * vhat + f1 * n0 + f2 * 2 * (na + nb) + f3 * nc
        snaps[s] = vhat
        if np.max(np.abs(np.fft.ifft(vhat).real)) > 10.0:
            raise RuntimeError(f"solution blew up at t={s * steps_per_snap * dt:.4f}")

    t = np.linspace(0.0, t_end, nt_out)
    x = np.linspace(-1.0, 1.0, nx_out)
    U = _fourier_eval(snaps, (x + 1.0) / 2.0)
    return t, x, U


# ---------------------------------------------------------------------------
# random initial conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrfField:
    """One draw of a periodic Gaussian random field on [0, 1]."""

    stds: np.ndarray
    cos_amp: np.ndarray
    sin_amp: np.ndarray

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=DTYPE)
        ks = 2.0 * np.pi * np.arange(1, self.stds.size + 1)
        phases = np.outer(x, ks)
        scale = np.sqrt(2.0) * self.stds
        return (np.cos(phases) @ (scale * self.cos_amp)
                + np.sin(phases) @ (scale * self.sin_amp))


def grf_field(rng, *, tau: float = 5.0, alpha: float = 2.0,
              amplitude: float = 25.0, n_modes: int = 32) -> GrfField:
    """Karhunen-Loeve draw with spectral decay ((2 pi k)^2 + tau^2)^-alpha
    (as covariance; amplitude multiplies the field, not the variance).
    The constant mode is excluded, so the field integrates to zero."""
    ks = 2.0 * np.pi * np.arange(1, n_modes + 1)
    stds = amplitude * (ks ** 2 + tau ** 2) ** (-alpha / 2.0)
    return GrfField(stds, rng.normal(size=n_modes), rng.normal(size=n_modes))


def grf_sample(m_x: int, rng, **params) -> np.ndarray:
    """Field values on m_x uniform sensors spanning [0, 1] inclusive."""
    if m_x < 8:
        raise ValueError("need at least 8 sensors")
    return grf_field(rng, **params).eval(np.linspace(0.0, 1.0, m_x))


# ---------------------------------------------------------------------------
# viscous Burgers solver
# ---------------------------------------------------------------------------

def burgers_solve(v, t_out, *, nu: float = NU_BURGERS, dt: float = 2e-4,
                  x_out=None, dealias: bool = True) -> np.ndarray:
    """Integrating-factor RK4 for u_t + u u_x = nu u_xx, periodic on [0, 1].

    The nonlinear term is the conservative -(u^2)_x / 2 in spectral
    space, so the mean of u is preserved to roundoff. v holds the
    initial state on the uniform solver grid; output rows are the
    requested times, columns the requested positions (solver grid when
    x_out is None).
    """
    v = np.asarray(v, dtype=DTYPE)
    n = v.size
    t_out = np.atleast_1d(np.asarray(t_out, dtype=DTYPE))
    steps = np.rint(t_out / dt).astype(int)
    if np.any(np.abs(steps * dt - t_out) > 1e-9) or np.any(np.diff(steps) < 0):
        raise ValueError("output times must be sorted multiples of dt")

    k = 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n)
    mask = np.ones(n)
    if dealias:
        mask[np.abs(np.fft.fftfreq(n, d=1.0 / n)) > n // 3] = 0.0
    e_half = np.exp(-nu * k ** 2 * dt / 2)
    e_full = e_half ** 2

    def rhs(vh):
        u = np.fft.ifft(vh).real
        return -0.5j * k * mask * np.fft.fft(u * u)

    def check_cfl(u):
        c = dt * np.max(np.abs(u)) * n
        if c > 1.0:
            raise RuntimeError(f"advective CFL number {c:.2f} exceeds 1")

    check_cfl(v)
    vhat = np.fft.fft(v)
    out = np.empty((t_out.size, n), dtype=DTYPE)
    done = 0
    for row, target_step in enumerate(steps):
        for _ in range(target_step - done):
            a = rhs(vhat)
            b = rhs(e_half * (vhat + dt / 2 * a))
            c = rhs(e_half * vhat + dt / 2 * b)
            d = rhs(e_full * vhat + dt * e_half * c)
            vhat = e_full * vhat + dt / 6 * (e_full * a + 2 * e_half * (b + c) + d)
        done = target_step
        u = np.fft.ifft(vhat).real
        check_cfl(u)
        out[row] = u
    if x_out is None:
        return out
    return np.atleast_2d(_fourier_eval(np.fft.fft(out, axis=1), x_out))


# ---------------------------------------------------------------------------
# operator-learning dataset
# ---------------------------------------------------------------------------

@dataclass
class OperatorDataset:
    """Input functions on sensors, solved outputs on a (t, x) query grid."""

    sensors: np.ndarray
    queries: np.ndarray
    v_train: np.ndarray
    u_train: np.ndarray
    v_test: np.ndarray
    u_test: np.ndarray
    nu: float

    def arrays(self) -> dict:
        return {"sensors": self.sensors, "queries": self.queries,
                "v_train": self.v_train, "u_train": self.u_train,
                "v_test": self.v_test, "u_test": self.u_test}


def build_burgers_dataset(n_train: int, n_test: int, m_x: int = 100,
                          seed: int = 0, *, grid=(33, 33), nu: float = NU_BURGERS,
                          n_solver: int = 512,
                          dt: float = 1.0 / 3200.0) -> OperatorDataset:
    """Draw random periodic initial states, solve each forward, and sample
    the solutions on a shared uniform (t, x) query grid (t = 0 included)."""
    if n_train < 1 or n_test < 1:
        raise ValueError("need at least one function per split")
    nt, nx = grid
    sensors = np.linspace(0.0, 1.0, m_x)
    t_grid = np.linspace(0.0, 1.0, nt)
    x_grid = np.linspace(0.0, 1.0, nx)
    tt, xx = np.meshgrid(t_grid, x_grid, indexing="ij")
    queries = np.column_stack([tt.ravel(), xx.ravel()])
    solver_x = np.arange(n_solver) / n_solver

    vs = np.empty((n_train + n_test, m_x), dtype=DTYPE)
    us = np.empty((n_train + n_test, nt * nx), dtype=DTYPE)
    for i in range(n_train + n_test):
        field = grf_field(child_rng(seed, "burgers", "field", i))
        vs[i] = field.eval(sensors)
        u = burgers_solve(field.eval(solver_x), t_grid, nu=nu, dt=dt,
                          x_out=x_grid)
        us[i] = u.ravel()
    return OperatorDataset(sensors, queries, vs[:n_train], us[:n_train],
                           vs[n_train:], us[n_train:], nu)


# ---------------------------------------------------------------------------
# trainer wiring
# ---------------------------------------------------------------------------

def make_data_term(name: str, model, X, y, **kw) -> Term:
    X = np.asarray(X, dtype=DTYPE)
    y = np.asarray(y, dtype=DTYPE).reshape(-1, model.out_dim)

    def residual(tp, p, idx):
        return residual_data(model, p, X[idx], y[idx])

    return Term(name=name, n=X.shape[0], residual=residual, **kw)


def make_data_probe(model, X, y, *, n_batches: int = 10,
                    cadence: int = 100) -> SNRProbe:
    X = np.asarray(X, dtype=DTYPE)
    y = np.asarray(y, dtype=DTYPE).reshape(-1, model.out_dim)

    def residual(tp, p, idx):
        return residual_data(model, p, X[idx], y[idx])

    return SNRProbe(residual=residual, n=X.shape[0], n_batches=n_batches,
                    cadence=cadence)


def allen_cahn_collocation(n: int, seed: int) -> np.ndarray:
    """(t, x) collocation points over [0, 1] x [-1, 1]."""
    return latin_hypercube(n, ((0.0, 1.0), (-1.0, 1.0)),
                           child_rng(seed, "ac", "colloc"))


def allen_cahn_ic_points(n: int = 201):
    x = np.linspace(-1.0, 1.0, n)
    X = np.column_stack([np.zeros(n), x])
    return X, allen_cahn_ic(x).reshape(-1, 1)


def _ac_residual_closure(model, pts, kappa):
    pts = np.asarray(pts, dtype=DTYPE)

    def residual(tp, p, idx):
        sub = pts[idx]
        t_c, x_c = sub[:, [0]], sub[:, [1]]
        jt = model.forward(p, [Jet2.seed(tp.const(t_c), order=1),
                               tp.const(x_c)])
        jx = model.forward(p, [tp.const(t_c),
                               Jet2.seed(tp.const(x_c), order=2)])
        return residual_allen_cahn(jt.f, jt.d1, jx.d2, kappa)

    return residual


def make_allen_cahn_pde_term(model, pts, *, kappa: float = AC_KAPPA,
                             name: str = "pde", **kw) -> Term:
    pts = np.asarray(pts, dtype=DTYPE)
    return Term(name=name, n=pts.shape[0],
                residual=_ac_residual_closure(model, pts, kappa), **kw)


def make_allen_cahn_pde_probe(model, pts, *, kappa: float = AC_KAPPA,
                              n_batches: int = 10,
                              cadence: int = 100) -> SNRProbe:
    pts = np.asarray(pts, dtype=DTYPE)
    return SNRProbe(residual=_ac_residual_closure(model, pts, kappa),
                    n=pts.shape[0], n_batches=n_batches, cadence=cadence)


def make_fa_eval(model, kind: str, n: int = 64):
    X, y = fa_test_grid(kind, n)

    def eval_fn(store):
        return relative_l2(y, model.predict(store, X))

    return eval_fn


def make_ac_eval(model, t, x, U):
    tt, xx = np.meshgrid(t, x, indexing="ij")
    X = np.column_stack([tt.ravel(), xx.ravel()])
    ref = np.asarray(U, dtype=DTYPE).ravel()

    def eval_fn(store):
        return relative_l2(ref, model.predict(store, X))

    return eval_fn
