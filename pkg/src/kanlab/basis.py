"""Univariate basis families behind cKAN edges and KKAN outer blocks.

Every evaluation routine is written against the diffcore dispatch layer, so
the same code runs on plain ndarrays (closed-form checks), tape Vars
(training), and Jet2 carriers (PDE residuals). Feature layouts are
channel-major: for a block of F channels with n basis terms each, features
are ordered [ch0·n terms, ch1·n terms, ...], matching coefficient tensors
stored as (out, F, n).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .diffcore import (
    DTYPE, Jet2, ParamStore, Var, affine, cos, exp, maximum, reshape, sin,
    sqrt, stack, tanh, transpose, vsum,
)

KINDS = ("chebyshev", "legendre", "sin", "chebgrid", "rbf", "rbf-single")

SIGMA_FLOOR = 1e-4
GRID_CENTERS = 5


@dataclass(frozen=True)
class OuterBasis:
    kind: str
    degree: int
    sigma: float | None = None  # rbf spread; resolved to the grid spacing at register()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")
        lo = 1 if self.kind in ("sin", "rbf", "rbf-single") else 0
        if self.degree < lo:
            raise ValueError(f"{self.kind} needs degree >= {lo}")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("rbf spread must be positive")


def n_coeffs(kind: str, degree: int) -> int:
    """Coefficients per univariate function."""
    return degree if kind in ("sin", "rbf", "rbf-single") else degree + 1


def _carrier_shape(x):
    if isinstance(x, Jet2):
        x = x.f
    if isinstance(x, Var):
        return np.asarray(x.val).shape
    return np.asarray(x).shape


def _ones_like(x):
    if isinstance(x, Jet2):
        return x.f.tp.const(np.ones(_carrier_shape(x), dtype=DTYPE))
    if isinstance(x, Var):
        return x.tp.const(np.ones(_carrier_shape(x), dtype=DTYPE))
    return np.ones_like(np.asarray(x, dtype=DTYPE))


def cheb_all(x, degree: int) -> list:
    """[T_0(x), ..., T_degree(x)] by the three-term recursion; any real x."""
    out = [_ones_like(x)]
    if degree >= 1:
        out.append(x)
    for n in range(1, degree):
        out.append((x * out[n]) * 2.0 - out[n - 1])
    return out


def legendre_all(x, degree: int) -> list:
    """[L_0(x), ..., L_degree(x)] by the Bonnet recursion."""
    out = [_ones_like(x)]
    if degree >= 1:
        out.append(x)
    for n in range(1, degree):
        nxt = ((x * out[n]) * float(2 * n + 1) - out[n - 1] * float(n)) * (1.0 / (n + 1))
        out.append(nxt)
    return out


def interleave(blocks: list):
    """n same-shape (B,F) feature blocks -> (B, F*n), channel-major."""
    n = len(blocks)
    if n == 1:
        return blocks[0]
    B, F = _carrier_shape(blocks[0])
    st = stack(blocks)              # (n, B, F)
    tr = transpose(st, (1, 2, 0))   # (B, F, n)
    return reshape(tr, (B, F * n))


def sin_mu_sigma(w, p):
    """Normalization constants for the sine family.

    The radicand of the printed spread goes negative as w -> 0, so it is
    floored to keep sigma at least SIGMA_FLOOR.
    """
    mu = exp(-(w * w) * 0.5) * sin(p)
    rad = 0.5 - exp(-(w * w)) * cos(p) - mu * mu
    sigma = sqrt(maximum(rad, SIGMA_FLOOR ** 2))
    return mu, sigma


def rbf_centers(degree: int) -> np.ndarray:
    """degree cell-center points strictly inside (-2, 2), spacing 4/degree."""
    step = 4.0 / degree
    return -2.0 + step * (np.arange(degree) + 0.5)


def register(store: ParamStore, prefix: str, rng: np.random.Generator,
             basis: OuterBasis, m: int, out_dim: int, fan_in: int) -> OuterBasis:
    """Create the parameter segments for one outer block of m functions.

    fan_in is the number of summed function outputs feeding each model output;
    coefficients draw from N(0, 1/(fan_in * n_coeffs)).
    """
    n = n_coeffs(basis.kind, basis.degree)
    std = np.sqrt(1.0 / (fan_in * n))
    if basis.kind == "rbf-single":
        store.add(f"{prefix}.C", rng.normal(0.0, std, size=(out_dim, n)))
    else:
        store.add(f"{prefix}.C", rng.normal(0.0, std, size=(out_dim, m, n)))
    if basis.kind == "sin":
        store.add(f"{prefix}.w", rng.normal(0.0, 1.0, size=(m, n)))
        store.add(f"{prefix}.p", np.zeros((m, n)))
    elif basis.kind == "chebgrid":
        wstd = np.sqrt(1.0 / (GRID_CENTERS * fan_in))
        store.add(f"{prefix}.W", rng.normal(0.0, wstd, size=(m, GRID_CENTERS)))
        store.add(f"{prefix}.b", np.tile(np.linspace(-0.1, 0.1, GRID_CENTERS), (m, 1)))
    elif basis.kind in ("rbf", "rbf-single"):
        store.add(f"{prefix}.centers", np.tile(rbf_centers(basis.degree), (m, 1)))
        if basis.sigma is None:
            basis = replace(basis, sigma=4.0 / basis.degree)
    return basis


def outer_features(basis: OuterBasis, p: dict, prefix: str, xi, m: int):
    """Per-function basis features of xi (B, m) -> (B, m*n) channel-major.

    For rbf-single the kernel features are summed over the m functions first,
    giving (B, n) for the shared coefficient row.
    """
    B = _carrier_shape(xi)[0]
    kind, D = basis.kind, basis.degree
    if kind == "chebyshev":
        return interleave(cheb_all(xi, D))
    if kind == "legendre":
        return interleave(legendre_all(xi, D))
    x3 = reshape(xi, (B, m, 1))
    if kind == "sin":
        mu, sigma = sin_mu_sigma(p[f"{prefix}.w"], p[f"{prefix}.p"])
        b = (sin(x3 * p[f"{prefix}.w"] + p[f"{prefix}.p"]) - mu) / sigma
        return reshape(b, (B, m * D))
    if kind == "chebgrid":
        s = vsum(tanh(x3 * p[f"{prefix}.W"] + p[f"{prefix}.b"]), axis=2)
        return interleave(cheb_all(s, D))
    if kind in ("rbf", "rbf-single"):
        diff = x3 - p[f"{prefix}.centers"]
        k = exp((diff * diff) * (-1.0 / (2.0 * basis.sigma ** 2)))
        if kind == "rbf-single":
            return vsum(k, axis=1)
        return reshape(k, (B, m * D))
    raise ValueError(kind)


def apply_outer(basis: OuterBasis, p: dict, prefix: str, xi, m: int, out_dim: int):
    """Sum of m univariate functions of xi's columns, mapped to out_dim outputs."""
    feats = outer_features(basis, p, prefix, xi, m)
    C = p[f"{prefix}.C"]
    if basis.kind != "rbf-single":
        C = reshape(C, (out_dim, m * n_coeffs(basis.kind, basis.degree)))
    return affine(feats, C)


def cheb_layer_features(x, degree: int):
    """cKAN edge features: Chebyshev terms of tanh-squashed inputs.

    x (B, F) -> (B, F*(degree+1)), channel-major.
    """
    return interleave(cheb_all(tanh(x), degree))
