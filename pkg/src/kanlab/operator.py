"""Operator learning: DeepONet assembly around any backbone model, the
operator loss, Householder QR, and the two-step QR training pipeline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diag import SNRProbe, relative_l2
from .diffcore import DTYPE, concat, dot, transpose
from .seeding import child_rng
from .train import Term, TrainConfig, Trainer


@dataclass
class DeepONet:
    """Branch (sensor vector -> N+1 coefficients) paired with a trunk
    (query point -> N features, constant 1 prepended). The prediction is
    the inner product O(v)(y) = c0(v) + sum_j c_j(v) phi_j(y)."""

    branch: object
    trunk: object

    def __post_init__(self):
        if self.branch.out_dim != self.trunk.out_dim + 1:
            raise ValueError("branch must emit one more output than the trunk")

    @property
    def n_basis(self) -> int:
        return self.branch.out_dim


def _const_cols(tp, X):
    return [tp.const(X[:, [j]]) for j in range(X.shape[1])]


def trunk_matrix(trunk, p, tp, Y):
    """On-tape (m_y, N+1) trunk feature matrix, ones column first."""
    phi0 = trunk.forward(p, _const_cols(tp, Y))
    return concat([np.ones((Y.shape[0], 1)), phi0], axis=1)


def trunk_matrix_np(trunk, store, Y) -> np.ndarray:
    phi0 = trunk.predict(store, Y)
    return np.hstack([np.ones((len(Y), 1)), phi0])


def deeponet_forward(net: DeepONet, store, v, y) -> float:
    v = np.asarray(v, dtype=DTYPE).reshape(1, -1)
    y = np.asarray(y, dtype=DTYPE).reshape(1, -1)
    c = net.branch.predict(store, v)[0]
    phi = trunk_matrix_np(net.trunk, store, y)[0]
    return float(phi @ c)


def deeponet_predict(net: DeepONet, store, V, Y) -> np.ndarray:
    """(K, m_y) predictions for sensor rows V at shared query rows Y."""
    C = net.branch.predict(store, np.asarray(V, dtype=DTYPE))
    return C @ trunk_matrix_np(net.trunk, store, Y).T


def deeponet_loss(net: DeepONet, store, V, U, Y) -> float:
    """Mean over function/query pairs of the squared prediction error."""
    U = np.asarray(U, dtype=DTYPE)
    return float(np.mean((deeponet_predict(net, store, V, Y) - U) ** 2))


def _deeponet_residual(net: DeepONet, V, U, Y):
    V = np.asarray(V, dtype=DTYPE)
    U = np.asarray(U, dtype=DTYPE)
    Y = np.asarray(Y, dtype=DTYPE)

    def residual(tp, p, idx):
        phi = trunk_matrix(net.trunk, p, tp, Y)
        c = net.branch.forward(p, _const_cols(tp, V[idx]))
        return dot(c, transpose(phi)) - U[idx]

    return residual


def make_deeponet_term(net: DeepONet, V, U, Y, *, name="op", **kw) -> Term:
    return Term(name=name, n=np.asarray(V).shape[0],
                residual=_deeponet_residual(net, V, U, Y), **kw)


def make_deeponet_probe(net: DeepONet, V, U, Y, *, n_batches: int = 8,
                        cadence: int = 100) -> SNRProbe:
    """SNR probe over a fixed block of input functions."""
    V = np.asarray(V, dtype=DTYPE)
    n = V.shape[0] - V.shape[0] % n_batches
    return SNRProbe(residual=_deeponet_residual(net, V[:n], U[:n], Y),
                    n=n, n_batches=n_batches, cadence=cadence)


def mean_rel_l2(reference, predicted) -> float:
    """Mean over function rows of the per-row relative L2 error."""
    reference = np.asarray(reference, dtype=DTYPE)
    predicted = np.asarray(predicted, dtype=DTYPE)
    if reference.shape != predicted.shape:
        raise ValueError("shape mismatch")
    return float(np.mean([relative_l2(r, q)
                          for r, q in zip(reference, predicted)]))


def make_deeponet_eval(net: DeepONet, V, U, Y):
    def eval_fn(store):
        return mean_rel_l2(U, deeponet_predict(net, store, V, Y))

    return eval_fn


# ---------------------------------------------------------------------------
# QR pipeline
# ---------------------------------------------------------------------------

def householder_qr(M):
    """Thin QR with the diagonal of R made positive. Raises on rank
    deficiency (|R_ii| below 1e-10 times the Frobenius norm of M)."""
    M = np.asarray(M, dtype=DTYPE)
    p, q = M.shape
    if p < q:
        raise ValueError("need at least as many rows as columns")
    R = M.copy()
    vs = []
    for j in range(q):
        v = R[j:, j].copy()
        alpha = np.linalg.norm(v)
        if v[0] > 0:
            alpha = -alpha
        v[0] -= alpha
        nv = np.linalg.norm(v)
        if nv == 0.0:
            vs.append(None)
            continue
        v /= nv
        R[j:, j:] -= 2.0 * np.outer(v, v @ R[j:, j:])
        vs.append(v)
    Rt = np.triu(R[:q, :q])
    Q = np.zeros((p, q))
    Q[:q] = np.eye(q)
    for j in reversed(range(q)):
        if vs[j] is not None:
            Q[j:] -= 2.0 * np.outer(vs[j], vs[j] @ Q[j:])
    sign = np.where(np.diag(Rt) < 0, -1.0, 1.0)
    Rt *= sign[:, None]
    Q *= sign[None, :]
    if np.min(np.abs(np.diag(Rt))) < 1e-10 * np.linalg.norm(M):
        raise ValueError("rank-deficient matrix")
    return Q, Rt


def triangular_inverse(R) -> np.ndarray:
    """Inverse of an upper-triangular matrix by back substitution."""
    R = np.asarray(R, dtype=DTYPE)
    q = R.shape[0]
    diag = np.diag(R)
    if np.any(diag == 0.0):
        raise ValueError("singular triangular matrix")
    T = np.zeros((q, q))
    eye = np.eye(q)
    for i in reversed(range(q)):
        T[i] = (eye[i] - R[i, i + 1:] @ T[i + 1:]) / diag[i]
    return T


@dataclass
class QRState:
    """Frozen stage-1 artifacts: trunk matrix, its QR factors, the
    triangular inverse used at predict time, and the stage-1 solution."""

    phi: np.ndarray
    q: np.ndarray
    r: np.ndarray
    t: np.ndarray
    a_star: np.ndarray

    @property
    def target(self) -> np.ndarray:
        """Stage-2 regression target R A*, one column per function."""
        return self.r @ self.a_star


def qr_stage1_term(trunk, store, Y, U, *, seed=0) -> Term:
    """Stage-1 term for min mean((Phi(mu) A - U)^2); U is (m_y, K), one
    column per function. Adds the A segment to the store on first use."""
    Y = np.asarray(Y, dtype=DTYPE)
    U = np.asarray(U, dtype=DTYPE)
    n_funcs = U.shape[1]
    ut = U.T.copy()
    n1 = trunk.out_dim + 1
    if "qr.A" not in store.segments:
        rng = child_rng(seed, "qr", "stage1", "A")
        store.add("qr.A", rng.normal(0.0, np.sqrt(1.0 / n1),
                                     size=(n1, n_funcs)))

    def residual(tp, p, idx):
        phi = trunk_matrix(trunk, p, tp, Y)
        # batched function subsets reach A through a column-selection
        # matrix so the gradient scatters back to the right columns
        sel = np.eye(n_funcs, dtype=DTYPE)[:, idx]
        pred = dot(phi, dot(p["qr.A"], tp.const(sel)))
        return transpose(pred) - ut[idx]

    return Term(name="trunk", n=n_funcs, residual=residual)


def qr_stage1(trunk, store, Y, U, cfg: TrainConfig, *, seed=0):
    """Fit trunk parameters and the auxiliary matrix jointly, full batch."""
    term = qr_stage1_term(trunk, store, Y, U, seed=seed)
    return Trainer(store, [term], cfg, seed=seed).run()


def qr_factorize(trunk, store, Y) -> QRState:
    phi = trunk_matrix_np(trunk, store, np.asarray(Y, dtype=DTYPE))
    Q, R = householder_qr(phi)
    return QRState(phi, Q, R, triangular_inverse(R),
                   store.view("qr.A").copy())


def qr_stage2_term(branch, V, target) -> Term:
    """Stage-2 term regressing the branch onto R A* (one column per
    function; the branch sees the matching sensor row)."""
    V = np.asarray(V, dtype=DTYPE)
    rows = np.asarray(target, dtype=DTYPE).T

    def residual(tp, p, idx):
        c = branch.forward(p, _const_cols(tp, V[idx]))
        return c - rows[idx]

    return Term(name="branch", n=V.shape[0], residual=residual)


def qr_stage2(branch, store, V, target, cfg: TrainConfig, *, seed=0):
    return Trainer(store, [qr_stage2_term(branch, V, target)], cfg,
                   seed=seed).run()


def qr_predict(branch, store, state: QRState, V) -> np.ndarray:
    """(K, m_y) predictions phi(y)^T T c(v); Q is never materialized."""
    C = branch.predict(store, np.asarray(V, dtype=DTYPE))
    return (C @ state.t.T) @ state.phi.T


def make_qr_eval(branch, state: QRState, V, U):
    def eval_fn(store):
        return mean_rel_l2(U, qr_predict(branch, store, state, V))

    return eval_fn
