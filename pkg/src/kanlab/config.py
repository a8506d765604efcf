"""Run configuration.

Sectioned TOML on disk, typed sections in memory, and builders that turn
a model section into a concrete network. Field names follow the run
configuration tables: N hidden layers of width H, KKAN feature count m,
outer degree D, inner degree D_e, and the attention block under
[train.rba].
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .basis import KINDS as BASIS_KINDS
from .basis import OuterBasis
from .models import CKan, Embedding, GroupedKKan, KKan, MLP
from .train import RBAConfig, TrainConfig

PROBLEM_KINDS = ("discontinuous", "smooth", "allen-cahn", "burgers")
MODEL_KINDS = ("mlp", "ckan", "kkan")
BODIES = ("plain", "gated", "adres")
INITS = ("glorot", "lecun-uniform")
EMBEDDINGS = ("none", "fourier", "odd-cheb", "cheb-input")
VARIANTS = ("deeponet", "qr")


class ConfigError(ValueError):
    """A config field is missing, unknown, or holds an unusable value.
    The message starts with the dotted field path."""

    def __init__(self, field_path: str, msg: str):
        super().__init__(f"{field_path}: {msg}")
        self.field = field_path


@dataclass(frozen=True)
class ProblemConfig:
    kind: str
    n_train: int = 0
    n_test: int = 64
    n_colloc: int = 0
    n_ic: int = 201
    reference: str = ""
    ref_modes: int = 2048
    ref_dt: float = 1e-3
    dataset: str = ""
    variant: str = "deeponet"
    embedding_dim: int = 100
    m_x: int = 100
    grid: tuple = (33, 33)


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    layers: int
    hidden: int
    m: int = 0
    degree: int = 0
    degree_e: int = 0
    basis: str = ""
    body: str = "plain"
    init: str = "glorot"
    embedding: str = "none"
    emb_degree: int = 0


@dataclass(frozen=True)
class TrainSection:
    iters: int = 0
    stage1_iters: int = 0
    stage2_iters: int = 0
    lr: float = 1e-3
    lr_psi: float = 0.0
    lr_g: float = 0.0
    decay_rate: float = 0.9
    decay_step: int = 5000
    batch: int = 0
    m_e: float = 1.0
    m_b: float = 1.0
    adaptive: bool = False
    gw_alpha: float = 0.99975
    gw_gamma: float = 0.99
    log_every: int = 100
    eval_every: int = 1000
    checkpoint_every: int = 0
    rba: RBAConfig | None = None


@dataclass(frozen=True)
class DiagSection:
    snr_every: int = 100
    snr_batches: int = 10
    probe_points: int = 1000
    gc: bool = True
    gc_points: int = 1024
    eval_stride: tuple = (1, 1)


@dataclass(frozen=True)
class RunConfig:
    seed: int
    problem: ProblemConfig
    model: ModelConfig | None
    train: TrainSection
    diag: DiagSection
    raw: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _coerce(path, value, kind):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigError(path, "expected an integer")
    if not isinstance(value, kind):
        raise ConfigError(path, f"expected {kind.__name__}, "
                                f"got {type(value).__name__}")
    return value


def _pair(path, value):
    if (not isinstance(value, list) or len(value) != 2
            or not all(isinstance(v, int) for v in value)):
        raise ConfigError(path, "expected a pair of integers")
    return tuple(value)


def _section(data: dict, name: str, fields: dict) -> dict:
    out = {}
    for key, value in data.items():
        path = f"{name}.{key}"
        if key not in fields:
            raise ConfigError(path, "unknown field")
        kind = fields[key]
        out[key] = _pair(path, value) if kind is tuple else _coerce(path, value, kind)
    return out


_PROBLEM_FIELDS = {"kind": str, "n_train": int, "n_test": int, "n_colloc": int,
                   "n_ic": int, "reference": str, "ref_modes": int,
                   "ref_dt": float, "dataset": str, "variant": str,
                   "embedding_dim": int, "m_x": int, "grid": tuple}
_MODEL_FIELDS = {"kind": str, "layers": int, "hidden": int, "m": int,
                 "degree": int, "degree_e": int, "basis": str, "body": str,
                 "init": str, "embedding": str, "emb_degree": int}
_TRAIN_FIELDS = {"iters": int, "stage1_iters": int, "stage2_iters": int,
                 "lr": float, "lr_psi": float, "lr_g": float,
                 "decay_rate": float, "decay_step": int, "batch": int,
                 "m_e": float, "m_b": float, "adaptive": bool,
                 "gw_alpha": float, "gw_gamma": float, "log_every": int,
                 "eval_every": int, "checkpoint_every": int}
_RBA_FIELDS = {"eta": float, "lam_max0": float, "lam_cap": float,
               "n_stage": int, "nu": float, "c": float}
_DIAG_FIELDS = {"snr_every": int, "snr_batches": int, "probe_points": int,
                "gc": bool, "gc_points": int, "eval_stride": tuple}


def _enum(path, value, allowed):
    if value not in allowed:
        raise ConfigError(path, f"must be one of {', '.join(allowed)}")
    return value


def _validate_model(mc: ModelConfig) -> ModelConfig:
    _enum("model.kind", mc.kind, MODEL_KINDS)
    _enum("model.body", mc.body, BODIES)
    _enum("model.init", mc.init, INITS)
    _enum("model.embedding", mc.embedding, EMBEDDINGS)
    if mc.layers < 1:
        raise ConfigError("model.layers", "need at least one hidden layer")
    if mc.hidden < 1:
        raise ConfigError("model.hidden", "need a positive width")
    if mc.kind in ("ckan", "kkan") and mc.degree < 1:
        raise ConfigError("model.degree", f"required for {mc.kind}")
    if mc.kind == "kkan":
        if not mc.basis:
            raise ConfigError("model.basis", "required for kkan")
        _enum("model.basis", mc.basis, BASIS_KINDS)
        if mc.m < 1:
            raise ConfigError("model.m", "required for kkan")
        if mc.degree_e < 1:
            raise ConfigError("model.degree_e", "required for kkan")
    if mc.embedding in ("fourier", "odd-cheb") and mc.emb_degree < 1:
        raise ConfigError("model.emb_degree",
                          f"required for the {mc.embedding} embedding")
    return mc


def load_config(path) -> RunConfig:
    with open(path, "rb") as f:
        try:
            data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError("config", f"not valid TOML ({e})") from e
    return parse_config(data)


def parse_config(data: dict) -> RunConfig:
    """Validate an already-parsed section tree (a loaded TOML file or a
    checkpoint's config snapshot) into a RunConfig."""
    known = {"seed", "problem", "model", "train", "diag"}
    for key in data:
        if key not in known:
            raise ConfigError(key, "unknown section")
    seed = _coerce("seed", data.get("seed", 0), int)

    if "problem" not in data:
        raise ConfigError("problem", "missing section")
    pfields = _section(data["problem"], "problem", _PROBLEM_FIELDS)
    if "kind" not in pfields:
        raise ConfigError("problem.kind", "missing field")
    problem = ProblemConfig(**pfields)
    _enum("problem.kind", problem.kind, PROBLEM_KINDS)
    _enum("problem.variant", problem.variant, VARIANTS)

    model = None
    if "model" in data:
        fields = _section(data["model"], "model", _MODEL_FIELDS)
        for req in ("kind", "layers", "hidden"):
            if req not in fields:
                raise ConfigError(f"model.{req}", "missing field")
        model = _validate_model(ModelConfig(**fields))

    tdata = dict(data.get("train", {}))
    rba_data = tdata.pop("rba", None)
    train = TrainSection(**_section(tdata, "train", _TRAIN_FIELDS))
    if rba_data is not None:
        rba = RBAConfig(**_section(rba_data, "train.rba", _RBA_FIELDS))
        if rba.eta <= 0.0:
            raise ConfigError("train.rba.eta", "must be positive")
        train = replace(train, rba=rba)

    diag = DiagSection(**_section(data.get("diag", {}), "diag", _DIAG_FIELDS))
    if diag.snr_batches < 2:
        raise ConfigError("diag.snr_batches", "need at least 2 sub-batches")

    return RunConfig(seed=seed, problem=problem, model=model, train=train,
                     diag=diag, raw=data)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _embeddings_for(mc: ModelConfig, d: int, periodic_cols) -> list | None:
    if mc.embedding == "none" or not periodic_cols:
        return None
    chosen = Embedding(mc.embedding, mc.emb_degree)
    return [chosen if j in periodic_cols else Embedding("identity")
            for j in range(d)]


def build_model(mc: ModelConfig, *, d: int, out_dim: int = 1, name: str,
                periodic_cols=()):
    """Instantiate the configured network for d raw inputs. periodic_cols
    names the coordinates that receive the configured embedding; the rest
    stay raw."""
    hidden = [mc.hidden] * mc.layers
    embeddings = _embeddings_for(mc, d, periodic_cols)
    if mc.kind == "mlp":
        return MLP(d, hidden, out_dim, name=name, body=mc.body, init=mc.init,
                   embeddings=embeddings)
    if mc.kind == "ckan":
        return CKan([d] + hidden + [out_dim], mc.degree, name=name,
                    embeddings=embeddings)
    outer = OuterBasis(mc.basis, mc.degree)
    if mc.body == "plain" and embeddings is None:
        # many identical scalar branches run as one grouped tensor program
        return GroupedKKan(d, mc.m, mc.degree_e, hidden, outer, out_dim,
                           name=name, init=mc.init)
    return KKan(d, mc.m, mc.degree_e, hidden, outer, out_dim, name=name,
                body=mc.body, init=mc.init, embeddings=embeddings)


def make_train_config(ts: TrainSection, *, iters: int | None = None,
                      model=None, store=None) -> TrainConfig:
    """Lower a train section onto the trainer. A two-block model with
    lr_psi / lr_g set gets its inner segments on lr_psi and everything
    else (the outer block) on lr_g."""
    base = ts.lr
    per_segment = {}
    if model is not None and hasattr(model, "inner_segments"):
        if ts.lr_g > 0.0:
            base = ts.lr_g
        if ts.lr_psi > 0.0:
            if store is None:
                raise ValueError("per-block rates need the initialized store")
            per_segment = {s: ts.lr_psi for s in model.inner_segments(store)}
    return TrainConfig(n_iters=iters if iters is not None else ts.iters,
                       lr=base, decay_rate=ts.decay_rate,
                       decay_step=ts.decay_step, lr_per_segment=per_segment,
                       rba=ts.rba, adaptive_weights=ts.adaptive,
                       gw_alpha=ts.gw_alpha, gw_gamma=ts.gw_gamma,
                       log_every=ts.log_every, eval_every=ts.eval_every)


def pick_sampler(ts: TrainSection) -> str:
    """Full batch unless a batch size is set; attention-weighted draws
    whenever the attention block is also on."""
    if ts.batch <= 0:
        return "full"
    return "pdf" if ts.rba is not None else "uniform"
