"""Model builders: MLP bodies (plain, gated-encoder, adaptive-residual),
cKAN stacks, ebMLP branches, and the two-block KKAN.

A model instance is an architecture description. `init` registers parameter
segments in a ParamStore; `forward` maps a list of per-coordinate column
carriers (ndarray, Var, or Jet2) to outputs, so the same model code serves
plain prediction, training tapes, and PDE jets. `predict` is the numpy
convenience wrapper.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import (
    OuterBasis, _carrier_shape, apply_outer, cheb_all, cheb_layer_features,
    interleave, register as register_outer,
)
from .diffcore import (
    DTYPE, ParamStore, Var, affine, concat, cos, reshape, sin, sqrt, stack,
    tanh, transpose, vsum,
)

INIT_KINDS = ("glorot", "lecun-uniform")
BODY_KINDS = ("plain", "gated", "adres")


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Embedding:
    kind: str  # identity | fourier | odd-cheb | cheb-input
    degree: int = 0

    def __post_init__(self):
        if self.kind not in ("identity", "fourier", "odd-cheb", "cheb-input"):
            raise ValueError(f"unknown embedding {self.kind!r}")
        if self.kind in ("fourier", "odd-cheb") and self.degree < 1:
            raise ValueError(f"{self.kind} embedding needs degree >= 1")

    @property
    def width(self) -> int:
        if self.kind == "identity":
            return 1
        if self.kind == "fourier":
            return 2 * self.degree
        if self.kind == "odd-cheb":
            return self.degree
        return self.degree + 1


def embed(emb: Embedding, col):
    """One scalar column (B,1) -> (B, emb.width). Exactly period-2 for the
    periodic kinds."""
    if emb.kind == "identity":
        return col
    if emb.kind == "fourier":
        parts = []
        for k in range(1, emb.degree + 1):
            parts.append(sin(col * (k * np.pi)))
            parts.append(cos(col * (k * np.pi)))
        return concat(parts, axis=1)
    if emb.kind == "odd-cheb":
        s = sin(col * np.pi)
        T = cheb_all(s, 2 * emb.degree - 1)
        return concat([T[2 * j + 1] for j in range(emb.degree)], axis=1)
    return concat(cheb_all(col, emb.degree), axis=1)


# ---------------------------------------------------------------------------
# linear-layer plumbing
# ---------------------------------------------------------------------------

def _draw(rng, init: str, fan_out: int, fan_in: int, shape) -> np.ndarray:
    if init == "glorot":
        a = np.sqrt(6.0 / (fan_in + fan_out))
    elif init == "lecun-uniform":
        a = np.sqrt(3.0 / fan_in)
    else:
        raise ValueError(f"unknown init {init!r}")
    return rng.uniform(-a, a, size=shape)


def _add_affine(store, name, rng, fan_out, fan_in, init, wn: bool):
    w = _draw(rng, init, fan_out, fan_in, (fan_out, fan_in))
    if wn:
        store.add(f"{name}.v", w)
        store.add(f"{name}.g", np.linalg.norm(w, axis=1))
    else:
        store.add(f"{name}.w", w)
    store.add(f"{name}.b", np.zeros(fan_out))


def _lin(p, name, x, wn: bool):
    if wn:
        v, g = p[f"{name}.v"], p[f"{name}.g"]
        rown = sqrt(vsum(v * v, axis=1) + 1e-24)  # keeps v = 0 off the 0/0 ray
        fan_out = np.asarray(g.val if isinstance(g, Var) else g).shape[0]
        w = v * reshape(g / rown, (fan_out, 1))
        return affine(x, w, p[f"{name}.b"])
    return affine(x, p[f"{name}.w"], p[f"{name}.b"])


def _coeff_layer(store, name, rng, out_dim, fan_in_edges, n_terms):
    std = np.sqrt(1.0 / (fan_in_edges * n_terms))
    store.add(name, rng.normal(0.0, std, size=(out_dim, fan_in_edges * n_terms)))


# ---------------------------------------------------------------------------
# bodies: uniform-width feature transforms used standalone and inside ebMLP
# ---------------------------------------------------------------------------

def _init_body(store, prefix, rng, kind, fan_in, width, n_layers, init, wn):
    if kind == "gated":
        wn = True
        _add_affine(store, f"{prefix}.U", rng, width, fan_in, init, wn=True)
        _add_affine(store, f"{prefix}.V", rng, width, fan_in, init, wn=True)
        for l in range(n_layers):
            fi = fan_in if l == 0 else width
            _add_affine(store, f"{prefix}.L{l}", rng, width, fi, init, wn=True)
    elif kind == "adres":
        _add_affine(store, f"{prefix}.in", rng, width, fan_in, init, wn=True)
        for l in range(n_layers):
            _add_affine(store, f"{prefix}.B{l}.f", rng, width, width, init, wn=True)
            _add_affine(store, f"{prefix}.B{l}.g", rng, width, width, init, wn=True)
            store.add(f"{prefix}.B{l}.alpha", np.zeros(1))
    elif kind == "plain":
        for l in range(n_layers):
            fi = fan_in if l == 0 else width
            _add_affine(store, f"{prefix}.L{l}", rng, width, fi, init, wn=wn)
    else:
        raise ValueError(f"unknown body {kind!r}")


def _run_body(p, prefix, kind, n_layers, h, wn):
    if kind == "gated":
        U = tanh(_lin(p, f"{prefix}.U", h, True))
        V = tanh(_lin(p, f"{prefix}.V", h, True))
        a = h
        for l in range(n_layers):
            a = tanh(_lin(p, f"{prefix}.L{l}", a, True))
            a = (1.0 - a) * U + a * V
        return a
    if kind == "adres":
        h = tanh(_lin(p, f"{prefix}.in", h, True))
        for l in range(n_layers):
            f = tanh(_lin(p, f"{prefix}.B{l}.f", h, True))
            g = _lin(p, f"{prefix}.B{l}.g", f, True)
            alpha = reshape(p[f"{prefix}.B{l}.alpha"], (1, 1))
            h = tanh(g * alpha + h * (1.0 - alpha))
        return h
    a = h
    for l in range(n_layers):
        a = tanh(_lin(p, f"{prefix}.L{l}", a, wn))
    return a


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

class BaseModel:
    name: str
    d: int
    out_dim: int
    embeddings: tuple

    def _embed_all(self, cols):
        return concat([embed(e, c) for e, c in zip(self.embeddings, cols)], axis=1)

    def init(self, store: ParamStore, rng) -> ParamStore:
        raise NotImplementedError

    def forward(self, p: dict, cols):
        raise NotImplementedError

    def predict(self, store: ParamStore, X: np.ndarray) -> np.ndarray:
        p = {name: store.view(name) for name in store.segments}
        X = np.asarray(X, dtype=DTYPE)
        cols = [X[:, [j]] for j in range(self.d)]
        return self.forward(p, cols)


def _resolve_embeddings(d, embeddings):
    if embeddings is None:
        return tuple(Embedding("identity") for _ in range(d))
    if len(embeddings) != d:
        raise ValueError("one embedding per input coordinate")
    return tuple(embeddings)


class MLP(BaseModel):
    """Fully-connected tanh network; body style selects plain, gated-encoder,
    or adaptive-residual variants (the latter two weight-normalized)."""

    def __init__(self, d, hidden, out_dim=1, *, name="mlp", body="plain",
                 init="glorot", embeddings=None):
        if not hidden:
            raise ValueError("need at least one hidden layer")
        if body in ("gated", "adres") and len(set(hidden)) != 1:
            raise ValueError(f"{body} body needs a uniform hidden width")
        self.name, self.d, self.out_dim = name, d, out_dim
        self.hidden = list(hidden)
        self.body = body
        self.init_kind = init
        self.embeddings = _resolve_embeddings(d, embeddings)

    def init(self, store, rng):
        f0 = sum(e.width for e in self.embeddings)
        wn = self.body != "plain"
        _init_body(store, f"{self.name}.body", rng, self.body, f0,
                   self.hidden[0], len(self.hidden), self.init_kind, wn)
        _add_affine(store, f"{self.name}.out", rng, self.out_dim,
                    self.hidden[-1], self.init_kind, wn)
        return store

    def forward(self, p, cols):
        h = self._embed_all(cols)
        h = _run_body(p, f"{self.name}.body", self.body, len(self.hidden), h,
                      self.body != "plain")
        return _lin(p, f"{self.name}.out", h, self.body != "plain")


class CKan(BaseModel):
    """Stacked KAN with Chebyshev edge functions of tanh-squashed inputs."""

    def __init__(self, widths, degree, *, name="ckan", embeddings=None):
        if len(widths) < 2:
            raise ValueError("need input and output widths")
        if degree < 1:
            raise ValueError("degree >= 1")
        self.name = name
        self.widths = list(widths)
        self.degree = degree
        self.d = widths[0]
        self.out_dim = widths[-1]
        self.embeddings = _resolve_embeddings(self.d, embeddings)
        self._f0 = sum(e.width for e in self.embeddings)

    def init(self, store, rng):
        fan_ins = [self._f0] + self.widths[1:-1]
        for l, (fi, fo) in enumerate(zip(fan_ins, self.widths[1:])):
            _coeff_layer(store, f"{self.name}.L{l}.C", rng, fo, fi, self.degree + 1)
        return store

    def forward(self, p, cols):
        h = self._embed_all(cols)
        for l in range(len(self.widths) - 1):
            feats = cheb_layer_features(h, self.degree)
            h = affine(feats, p[f"{self.name}.L{l}.C"])
        return h


class EbMLP(BaseModel):
    """MLP between two trainable Chebyshev feature layers: input expansion
    H0 = C ⊙ [T_j(x)], body, then a linear map over T_j(tanh(H_L))."""

    def __init__(self, in_width, de, hidden, m, *, name="ebmlp", body="plain",
                 init="glorot"):
        if not hidden:
            raise ValueError("need at least one hidden layer")
        self.name, self.d, self.out_dim = name, in_width, m
        self.in_width = in_width
        self.de = de
        self.hidden = list(hidden)
        self.m = m
        self.body = body
        self.init_kind = init
        self.embeddings = tuple(Embedding("identity") for _ in range(in_width))

    def init(self, store, rng):
        ncf = self.de + 1
        store.add(f"{self.name}.inC",
                  rng.normal(0.0, np.sqrt(1.0 / ncf), size=(self.in_width, ncf)))
        _init_body(store, f"{self.name}.body", rng, self.body,
                   self.in_width * ncf, self.hidden[0], len(self.hidden),
                   self.init_kind, self.body != "plain")
        _coeff_layer(store, f"{self.name}.outC", rng, self.m, self.hidden[-1], ncf)
        return store

    def forward(self, p, cols):
        e = concat(cols, axis=1) if len(cols) > 1 else cols[0]
        return ebmlp_apply(p, self.name, e, self.in_width, self.de, self.body,
                           len(self.hidden))


def ebmlp_apply(p, prefix, e, in_width, de, body, n_layers):
    ncf = de + 1
    feats = interleave(cheb_all(e, de))
    h = feats * reshape(p[f"{prefix}.inC"], (in_width * ncf,))
    h = _run_body(p, f"{prefix}.body", body, n_layers, h, body != "plain")
    rfeats = interleave(cheb_all(tanh(h), de))
    return affine(rfeats, p[f"{prefix}.outC"])


class KKan(BaseModel):
    """Two-block network: per-coordinate ebMLP branches producing m features,
    summed across coordinates, then an outer block of m univariate basis
    expansions mapped to the outputs."""

    def __init__(self, d, m, de, hidden, outer: OuterBasis, out_dim=1, *,
                 name="kkan", body="plain", init="glorot", embeddings=None):
        self.name, self.d, self.out_dim = name, d, out_dim
        self.m = m
        self.de = de
        self.hidden = list(hidden)
        self.outer = outer
        self.body = body
        self.init_kind = init
        self.embeddings = _resolve_embeddings(d, embeddings)

    def init(self, store, rng):
        for i, e in enumerate(self.embeddings):
            br = EbMLP(e.width, self.de, self.hidden, self.m,
                       name=f"{self.name}.br{i}", body=self.body,
                       init=self.init_kind)
            br.init(store, rng)
        self.outer = register_outer(store, f"{self.name}.outer", rng,
                                    self.outer, self.m, self.out_dim,
                                    fan_in=self.m)
        return store

    def forward(self, p, cols):
        xi = None
        for i, emb in enumerate(self.embeddings):
            e = embed(emb, cols[i])
            out = ebmlp_apply(p, f"{self.name}.br{i}", e, emb.width, self.de,
                              self.body, len(self.hidden))
            xi = out if xi is None else xi + out
        return apply_outer(self.outer, p, f"{self.name}.outer", xi, self.m,
                           self.out_dim)

    def inner_segments(self, store) -> list[str]:
        """Segment names of the inner block (branches), for per-block lr."""
        return [s for s in store.segments if s.startswith(f"{self.name}.br")]


class GroupedKKan(BaseModel):
    """KKAN over many identical scalar branches, executed as one grouped
    tensor program instead of a per-branch loop. Parameters are stored
    stacked along a leading branch axis."""

    def __init__(self, d, m, de, hidden, outer: OuterBasis, out_dim=1, *,
                 name="kkan", init="glorot"):
        self.name, self.d, self.out_dim = name, d, out_dim
        self.m = m
        self.de = de
        self.hidden = list(hidden)
        self.outer = outer
        self.init_kind = init
        self.embeddings = tuple(Embedding("identity") for _ in range(d))

    def init(self, store, rng):
        d, ncf = self.d, self.de + 1
        store.add(f"{self.name}.in.C",
                  rng.normal(0.0, np.sqrt(1.0 / ncf), size=(d, 1, ncf)))
        fan_ins = [ncf] + self.hidden[:-1]
        for l, (fi, fo) in enumerate(zip(fan_ins, self.hidden)):
            store.add(f"{self.name}.L{l}.w",
                      _draw(rng, self.init_kind, fo, fi, (d, fo, fi)))
            store.add(f"{self.name}.L{l}.b", np.zeros((d, fo)))
        H = self.hidden[-1]
        std = np.sqrt(1.0 / (H * ncf))
        store.add(f"{self.name}.out.C",
                  rng.normal(0.0, std, size=(d, self.m, H * ncf)))
        self.outer = register_outer(store, f"{self.name}.outer", rng,
                                    self.outer, self.m, self.out_dim,
                                    fan_in=self.m)
        return store

    def forward(self, p, cols):
        d, ncf = self.d, self.de + 1
        x = stack(cols)                                  # (d, B, 1)
        feats = concat(cheb_all(x, self.de), axis=2)     # (d, B, ncf)
        h = feats * reshape(p[f"{self.name}.in.C"], (d, 1, ncf))
        for l in range(len(self.hidden)):
            h = tanh(affine(h, p[f"{self.name}.L{l}.w"], p[f"{self.name}.L{l}.b"]))
        rfeats = interleave_grouped(cheb_all(tanh(h), self.de))
        br = affine(rfeats, p[f"{self.name}.out.C"])     # (d, B, m)
        xi = vsum(br, axis=0)                            # (B, m)
        return apply_outer(self.outer, p, f"{self.name}.outer", xi, self.m,
                           self.out_dim)

    def inner_segments(self, store) -> list[str]:
        pre = (f"{self.name}.in.", f"{self.name}.L", f"{self.name}.out.C")
        return [s for s in store.segments if s.startswith(pre)]


def interleave_grouped(blocks):
    """n blocks of (P, B, F) -> (P, B, F*n), channel-major."""
    n = len(blocks)
    if n == 1:
        return blocks[0]
    P, B, F = _carrier_shape(blocks[0])
    st = stack(blocks)                   # (n, P, B, F)
    tr = transpose(st, (1, 2, 3, 0))     # (P, B, F, n)
    return reshape(tr, (P, B, F * n))
