"""Training engine.

Residual loss terms with per-point attention multipliers, a staged
multiplier bound with PDF resampling, gradient-norm global weights, and
Adam with exponential learning-rate decay, combined into one loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diag import MetricLog, SNRProbe, snr
from .diffcore import DTYPE, ParamStore, Tape, Var, grad, vmean
from .seeding import child_rng

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
NORM_FLOOR = 1e-12


@dataclass
class Term:
    """One loss term: a named residual over a fixed point set.

    residual(tape, params, idx) must return the residual vector for the
    selected points; params may be tape nodes (for gradients) or plain
    arrays (for evaluation passes). sampler picks the batch indices each
    iteration: "full" walks the entire set, "uniform" draws with
    replacement, "pdf" draws from the attention distribution.
    """

    name: str
    n: int
    residual: object
    batch: int | None = None
    sampler: str = "full"
    weight: float = 1.0
    ref: bool = False

    def __post_init__(self):
        if self.sampler not in ("full", "uniform", "pdf"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.sampler != "full" and not self.batch:
            raise ValueError("batched samplers need a batch size")


def residual_data(model, p, X, target):
    """Prediction minus target, elementwise over the batch."""
    X = np.asarray(X, dtype=DTYPE)
    target = np.asarray(target, dtype=DTYPE).reshape(-1, model.out_dim)
    cols = [X[:, [j]] for j in range(model.d)]
    return model.forward(p, cols) - target


def residual_allen_cahn(u, u_t, u_xx, kappa=1e-4):
    """Reaction-diffusion residual u_t - kappa*u_xx + 5u(u^2 - 1)."""
    return u_t - kappa * u_xx + 5.0 * (u * (u * u - 1.0))


def _align(lam, shape):
    lam = np.asarray(lam, dtype=DTYPE)
    if lam.ndim == 0:
        return lam
    if lam.shape[0] != shape[0]:
        raise ValueError("multiplier / residual length mismatch")
    return lam.reshape((-1,) + (1,) * (len(shape) - 1))


def loss_term(lam, r):
    """Mean of (lam * r)^2; lam enters as fixed data, never as a
    differentiated quantity."""
    if isinstance(r, Var):
        w = r.tp.const(_align(lam, r.shape))
        return vmean((w * r) ** 2)
    r = np.asarray(r, dtype=DTYPE)
    return float(np.mean((_align(lam, r.shape) * r) ** 2))


@dataclass(frozen=True)
class RBAConfig:
    eta: float = 0.01
    lam_max0: float = 10.0
    lam_cap: float = 20.0
    n_stage: int = 50000
    nu: float = 2.0
    c: float = 0.5


class RBAState:
    """Per-term attention multipliers with a staged upper bound."""

    def __init__(self, cfg: RBAConfig, sizes: dict[str, int]):
        self.cfg = cfg
        self.lam = {name: np.full(n, 0.1 * cfg.lam_max0, dtype=DTYPE)
                    for name, n in sizes.items()}

    def lam_max(self, k: int) -> float:
        c = self.cfg
        return float(min(c.lam_max0 + k // c.n_stage, c.lam_cap))

    def gamma(self, k: int) -> float:
        return 1.0 - self.cfg.eta / self.lam_max(k)

    def pdf(self, name: str) -> np.ndarray:
        w = self.lam[name] ** self.cfg.nu
        m = w.mean()
        # all-zero multipliers degrade to uniform rather than 0/0
        return (w / m if m > 0.0 else np.ones_like(w)) + self.cfg.c

    def sample(self, name: str, bs: int, rng) -> np.ndarray:
        p = self.pdf(name)
        return rng.choice(p.size, size=bs, replace=True, p=p / p.sum())

    def update(self, name: str, idx: np.ndarray, r, k: int) -> None:
        """Decay plus a kick normalized by the batch peak; points outside
        the batch keep their multiplier. A flat-zero batch is skipped."""
        r = np.abs(np.asarray(r, dtype=DTYPE)).ravel()
        rmax = r.max() if r.size else 0.0
        if rmax <= 0.0:
            return
        lam = self.lam[name]
        lam[idx] = self.gamma(k) * lam[idx] + self.cfg.eta * (r / rmax)


class GlobalWeights:
    """Gradient-norm balancing across loss terms.

    The reference term keeps its fixed weight; every other term tracks
    m_ref * |g_ref| / |g_term| through two EMAs, one (gamma_g) smoothing
    the observed gradient norms and one (alpha) smoothing the weight
    itself. Norm EMAs initialize to the first observed value.
    """

    def __init__(self, weights: dict[str, float], ref: str, *,
                 alpha: float = 0.99975, gamma_g: float = 0.99,
                 adaptive: bool = True):
        if ref not in weights:
            raise ValueError(f"reference term {ref!r} missing")
        self.m = {k: float(v) for k, v in weights.items()}
        self.ref = ref
        self.alpha = float(alpha)
        self.gamma_g = float(gamma_g)
        self.adaptive = adaptive
        self.ema: dict[str, float] = {}

    def observe(self, name: str, grad_norm: float) -> None:
        if name in self.ema:
            self.ema[name] = (self.gamma_g * self.ema[name]
                              + (1.0 - self.gamma_g) * float(grad_norm))
        else:
            self.ema[name] = float(grad_norm)

    def update(self) -> None:
        if not self.adaptive or self.ref not in self.ema:
            return
        e_ref = self.ema[self.ref]
        for name in self.m:
            if name == self.ref or name not in self.ema:
                continue
            ratio = self.m[self.ref] * e_ref / max(self.ema[name], NORM_FLOOR)
            self.m[name] = self.alpha * self.m[name] + (1.0 - self.alpha) * ratio


def update_direction(grads: dict[str, np.ndarray],
                     weights: dict[str, float]) -> np.ndarray:
    """Negative weighted sum of the per-term gradients."""
    total = None
    for name, g in grads.items():
        contrib = weights[name] * g
        total = contrib if total is None else total + contrib
    return -total


def lr_vector(store: ParamStore, base: float, per_segment=None):
    """Scalar when uniform; otherwise a per-coordinate vector with the
    named segments overridden."""
    if not per_segment:
        return float(base)
    lr = np.full(store.size, float(base), dtype=DTYPE)
    for name, rate in per_segment.items():
        lr[store.slice_of(name)] = float(rate)
    return lr


class Adam:
    """Adam with exponentially decaying learning rate.

    lr may be a scalar or a per-coordinate vector (two-block models give
    their inner and outer blocks different rates).
    """

    def __init__(self, n: int, lr, decay_rate: float = 1.0, decay_step: int = 1):
        self.m = np.zeros(n, dtype=DTYPE)
        self.v = np.zeros(n, dtype=DTYPE)
        self.t = 0
        self.lr0 = float(lr) if np.isscalar(lr) else np.asarray(lr, dtype=DTYPE)
        self.decay_rate = float(decay_rate)
        self.decay_step = int(decay_step)

    def lr_at(self, k: int):
        return self.lr0 * self.decay_rate ** (k / self.decay_step)

    def step(self, values: np.ndarray, g: np.ndarray, k: int) -> None:
        self.t += 1
        self.m = ADAM_BETA1 * self.m + (1.0 - ADAM_BETA1) * g
        self.v = ADAM_BETA2 * self.v + (1.0 - ADAM_BETA2) * g * g
        mh = self.m / (1.0 - ADAM_BETA1 ** self.t)
        vh = self.v / (1.0 - ADAM_BETA2 ** self.t)
        values -= self.lr_at(k) * mh / (np.sqrt(vh) + ADAM_EPS)


class TrainDiverged(RuntimeError):
    """Raised when a loss term goes non-finite; carries a snapshot of
    the step that blew up."""

    def __init__(self, snapshot: dict):
        super().__init__(f"non-finite loss at iteration {snapshot.get('iteration')}")
        self.snapshot = snapshot


@dataclass
class TrainConfig:
    n_iters: int
    lr: float = 1e-3
    decay_rate: float = 0.9
    decay_step: int = 5000
    lr_per_segment: dict = field(default_factory=dict)
    rba: RBAConfig | None = None
    adaptive_weights: bool = False
    gw_alpha: float = 0.99975
    gw_gamma: float = 0.99
    log_every: int = 100
    eval_every: int = 1000


class Trainer:
    """Single owner of parameters and optimizer state for one run.

    Each step walks the terms in declaration order: sample a batch,
    build the weighted loss with the current multipliers held fixed,
    take the gradient, refresh the multipliers from the batch residuals,
    then fold the per-term gradients into one Adam update scaled by the
    global weights.
    """

    def __init__(self, store: ParamStore, terms, cfg: TrainConfig, *, seed=0):
        names = [t.name for t in terms]
        if len(set(names)) != len(names):
            raise ValueError("duplicate term names")
        refs = [t.name for t in terms if t.ref]
        if len(refs) > 1:
            raise ValueError("at most one reference term")
        self.store = store
        self.terms = list(terms)
        self.cfg = cfg
        self.ref = refs[0] if refs else terms[0].name
        if cfg.rba is not None:
            self.rba = RBAState(cfg.rba, {t.name: t.n for t in terms})
        else:
            self.rba = None
            for t in terms:
                if t.sampler == "pdf":
                    raise ValueError("pdf sampling needs an rba block")
        self.gw = GlobalWeights({t.name: t.weight for t in terms}, self.ref,
                                alpha=cfg.gw_alpha, gamma_g=cfg.gw_gamma,
                                adaptive=cfg.adaptive_weights)
        self.adam = Adam(store.size, lr_vector(store, cfg.lr, cfg.lr_per_segment),
                         cfg.decay_rate, cfg.decay_step)
        self.rngs = {t.name: child_rng(seed, "train", "sample", t.name)
                     for t in terms}
        self.k = 0
        self.last_losses: dict[str, float] = {}

    def _indices(self, term: Term) -> np.ndarray:
        if term.sampler == "full":
            return np.arange(term.n)
        rng = self.rngs[term.name]
        if term.sampler == "uniform":
            return rng.integers(0, term.n, size=term.batch)
        return self.rba.sample(term.name, term.batch, rng)

    def step(self) -> dict[str, float]:
        k = self.k
        losses: dict[str, float] = {}
        grads: dict[str, np.ndarray] = {}
        for t in self.terms:
            idx = self._indices(t)
            tp = Tape()
            pv = tp.params(self.store)
            r = t.residual(tp, pv, idx)
            lam = self.rba.lam[t.name][idx] if self.rba is not None else 1.0
            L = loss_term(lam, r)
            losses[t.name] = float(L.val)
            g = grad(tp, L, self.store)
            grads[t.name] = g
            self.gw.observe(t.name, float(np.linalg.norm(g)))
            if self.rba is not None:
                self.rba.update(t.name, idx, r.val, k)
        if not all(np.isfinite(v) for v in losses.values()):
            raise TrainDiverged(self._snapshot(losses))
        self.gw.update()
        p = update_direction(grads, self.gw.m)
        self.adam.step(self.store.values, -p, k)
        self.k = k + 1
        self.last_losses = losses
        return losses

    def _snapshot(self, losses: dict) -> dict:
        cfg = self.cfg
        snap = {"iteration": self.k, "losses": dict(losses),
                "weights": dict(self.gw.m),
                "lr": cfg.lr * cfg.decay_rate ** (self.k / cfg.decay_step)}
        if self.rba is not None:
            snap["lam_max"] = self.rba.lam_max(self.k)
            snap["lam_range"] = {n: (float(v.min()), float(v.max()))
                                 for n, v in self.rba.lam.items()}
        return snap

    def run(self, *, log: MetricLog | None = None, eval_fn=None, gc_fn=None,
            probe: SNRProbe | None = None, until: int | None = None) -> MetricLog:
        log = log if log is not None else MetricLog()
        cfg = self.cfg
        end = cfg.n_iters if until is None else min(int(until), cfg.n_iters)
        while self.k < end:
            losses = self.step()
            k1 = self.k
            if k1 % cfg.log_every == 0 or k1 == end:
                for name, v in losses.items():
                    log.add(k1, f"loss_{name}", v)
                for name, m in self.gw.m.items():
                    if name != self.ref:
                        log.add(k1, f"m_{name}", m)
                log.add(k1, "lr",
                        cfg.lr * cfg.decay_rate ** (self.k / cfg.decay_step))
                if self.rba is not None:
                    log.add(k1, "lam_max", self.rba.lam_max(self.k))
            if probe is not None and (k1 % probe.cadence == 0 or k1 == end):
                log.add(k1, "snr", probe_snr(self.store, probe))
            if k1 % cfg.eval_every == 0 or k1 == end:
                if eval_fn is not None:
                    log.add(k1, "rel_l2", float(eval_fn(self.store)))
                if gc_fn is not None:
                    log.add(k1, "gc", float(gc_fn(self.store)))
                for t in self.terms:
                    log.add(k1, f"mean_abs_r_{t.name}",
                            mean_abs_residual(t, self.store))
        return log

    def state_dict(self) -> dict:
        s = {"k": self.k, "adam_t": self.adam.t,
             "adam_m": self.adam.m.copy(), "adam_v": self.adam.v.copy(),
             "gw_m": dict(self.gw.m), "gw_ema": dict(self.gw.ema),
             "rng": {n: r.bit_generator.state for n, r in self.rngs.items()}}
        if self.rba is not None:
            s["lam"] = {n: v.copy() for n, v in self.rba.lam.items()}
        return s

    def load_state(self, s: dict) -> None:
        self.k = int(s["k"])
        self.adam.t = int(s["adam_t"])
        self.adam.m = np.asarray(s["adam_m"], dtype=DTYPE).copy()
        self.adam.v = np.asarray(s["adam_v"], dtype=DTYPE).copy()
        self.gw.m = {k: float(v) for k, v in s["gw_m"].items()}
        self.gw.ema = {k: float(v) for k, v in s["gw_ema"].items()}
        for n, state in s["rng"].items():
            self.rngs[n].bit_generator.state = state
        if self.rba is not None:
            for n, v in s["lam"].items():
                self.rba.lam[n][:] = v


def probe_snr(store: ParamStore, probe: SNRProbe) -> float:
    """SNR of the unweighted probe-loss gradient across sub-batches."""
    gs = []
    for idx in probe.sub_batches():
        tp = Tape()
        pv = tp.params(store)
        r = probe.residual(tp, pv, idx)
        gs.append(grad(tp, vmean(r * r), store))
    return snr(gs)


def mean_abs_residual(term: Term, store: ParamStore) -> float:
    """Mean |r| over the term's full point set; plain arrays in, so no
    gradient bookkeeping."""
    p = {name: store.view(name) for name in store.segments}
    r = term.residual(Tape(), p, np.arange(term.n))
    if isinstance(r, Var):
        r = r.val
    return float(np.mean(np.abs(np.asarray(r))))


def train_loop(store: ParamStore, terms, cfg: TrainConfig, *, seed=0,
               eval_fn=None, gc_fn=None, probe=None, log=None):
    """Run a fresh Trainer to completion; returns (store, metric log)."""
    tr = Trainer(store, terms, cfg, seed=seed)
    out = tr.run(log=log, eval_fn=eval_fn, gc_fn=gc_fn, probe=probe)
    return store, out
