"""Command-line front end.

Four subcommands cover the workflow: datagen writes solver datasets,
train runs one experiment from a TOML config into a run directory, eval
scores a checkpoint against a dataset, and report pivots the metric
stream into plot-ready tables.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

# single knob for the BLAS/OpenMP pool width; must land before numpy loads
_threads = os.environ.get("KANLAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import numpy as np

from .config import (ConfigError, RunConfig, build_model, load_config,
                     make_train_config, parse_config, pick_sampler)
from .diag import (MetricLog, SNRProbe, detect_stages, geometric_complexity,
                   relative_l2)
from .diffcore import ParamStore
from .operator import (DeepONet, QRState, deeponet_predict, make_deeponet_eval,
                       make_deeponet_probe, make_deeponet_term, make_qr_eval,
                       qr_factorize, qr_predict, qr_stage1_term, qr_stage2_term,
                       trunk_matrix_np)
from .problems import (allen_cahn_collocation, allen_cahn_ic_points,
                       allen_cahn_reference, build_burgers_dataset,
                       fa_training_data, latin_hypercube, make_ac_eval,
                       make_allen_cahn_pde_probe, make_allen_cahn_pde_term,
                       make_data_probe, make_data_term, make_fa_eval, target)
from .runio import (MANIFEST, Checkpoint, load_checkpoint, read_arrays,
                    read_metrics_csv, restore_params, save_checkpoint,
                    write_arrays, write_metrics_csv, write_run_manifest)
from .seeding import child_rng
from .train import TrainDiverged, Trainer

AC_BOX = ((0.0, 1.0), (-1.0, 1.0))
AC_REF_GRID = (501, 201)


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _require(cond, field_path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(field_path, msg)


def _probe_size(n_points: int, n_batches: int) -> int:
    return n_points - n_points % n_batches


def _fa_embed_cols(cfg: RunConfig):
    return (0, 1) if cfg.model.embedding != "none" else ()


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _drive(trainer: Trainer, store: ParamStore, cfg: RunConfig, run_dir: Path,
           *, stage: str, prior: Checkpoint | None,
           metrics: str = "metrics.csv", extra: dict | None = None,
           **hooks) -> None:
    """Run one stage to completion with periodic checkpoints. A matching
    unfinished checkpoint resumes in place; a finished one is a no-op."""
    merge = False
    if prior is not None and prior.stage == stage:
        restore_params(store, prior.params)
        if prior.done:
            return
        trainer.load_state(prior.trainer_state)
        merge = True
    ck_dir = run_dir / "checkpoint"
    log = MetricLog()
    end = trainer.cfg.n_iters
    step = cfg.train.checkpoint_every or end
    while True:
        trainer.run(log=log, until=min(end, trainer.k + step), **hooks)
        save_checkpoint(ck_dir, store, config=cfg.raw,
                        trainer_state=trainer.state_dict(), stage=stage,
                        done=trainer.k >= end, extra=extra)
        write_metrics_csv(log, run_dir / metrics, merge=merge)
        if trainer.k >= end:
            return


def _train_fa(cfg: RunConfig, run_dir: Path, prior: Checkpoint | None) -> None:
    kind = cfg.problem.kind
    _require(cfg.problem.n_train >= 1, "problem.n_train",
             "need training points")
    model = build_model(cfg.model, d=2, name="f",
                        periodic_cols=_fa_embed_cols(cfg))
    store = model.init(ParamStore(), child_rng(cfg.seed, "init", "f"))
    X, y = fa_training_data(kind, cfg.problem.n_train, cfg.seed)
    ts, dg = cfg.train, cfg.diag
    term = make_data_term("data", model, X, y, batch=ts.batch or None,
                          sampler=pick_sampler(ts))
    tf = target(kind)
    Xp = latin_hypercube(_probe_size(dg.probe_points, dg.snr_batches), tf.box,
                         child_rng(cfg.seed, "fa", kind, "probe"))
    probe = make_data_probe(model, Xp, tf(Xp[:, [0]], Xp[:, [1]]),
                            n_batches=dg.snr_batches, cadence=dg.snr_every)
    gc_fn = None
    if dg.gc:
        Xg = latin_hypercube(dg.gc_points, tf.box,
                             child_rng(cfg.seed, "fa", kind, "gc"))
        gc_fn = lambda s: geometric_complexity(model, s, Xg)
    trainer = Trainer(store, [term],
                      make_train_config(ts, model=model, store=store),
                      seed=cfg.seed)
    _drive(trainer, store, cfg, run_dir, stage="main", prior=prior,
           eval_fn=make_fa_eval(model, kind, cfg.problem.n_test),
           gc_fn=gc_fn, probe=probe)


def _train_ac(cfg: RunConfig, run_dir: Path, prior: Checkpoint | None) -> None:
    p = cfg.problem
    _require(p.n_colloc >= 1, "problem.n_colloc", "need collocation points")
    _require(p.reference != "", "problem.reference",
             "path to a reference dataset (datagen allen-cahn-ref)")
    _require(cfg.model.embedding in ("fourier", "odd-cheb"), "model.embedding",
             "periodic boundaries are enforced through a periodic embedding")
    arrays, _ = read_arrays(p.reference)
    t_ref, x_ref, U_ref = arrays["t"], arrays["x"], arrays["U"]
    # time is a raw coordinate; only x runs through the periodic embedding
    model = build_model(cfg.model, d=2, name="u", periodic_cols=(1,))
    store = model.init(ParamStore(), child_rng(cfg.seed, "init", "u"))
    ts, dg = cfg.train, cfg.diag
    pde = make_allen_cahn_pde_term(model,
                                   allen_cahn_collocation(p.n_colloc, cfg.seed),
                                   weight=ts.m_e, ref=True,
                                   batch=ts.batch or None,
                                   sampler=pick_sampler(ts))
    X_ic, y_ic = allen_cahn_ic_points(p.n_ic)
    ic = make_data_term("ic", model, X_ic, y_ic, weight=ts.m_b)
    Xp = latin_hypercube(_probe_size(dg.probe_points, dg.snr_batches), AC_BOX,
                         child_rng(cfg.seed, "ac", "probe"))
    probe = make_allen_cahn_pde_probe(model, Xp, n_batches=dg.snr_batches,
                                      cadence=dg.snr_every)
    gc_fn = None
    if dg.gc:
        Xg = latin_hypercube(dg.gc_points, AC_BOX,
                             child_rng(cfg.seed, "ac", "gc"))
        gc_fn = lambda s: geometric_complexity(model, s, Xg)
    st, sx = dg.eval_stride
    eval_fn = make_ac_eval(model, t_ref[::st], x_ref[::sx], U_ref[::st, ::sx])
    trainer = Trainer(store, [pde, ic],
                      make_train_config(ts, model=model, store=store),
                      seed=cfg.seed)
    _drive(trainer, store, cfg, run_dir, stage="main", prior=prior,
           eval_fn=eval_fn, gc_fn=gc_fn, probe=probe)


def _freeze(store: ParamStore, *, keep) -> dict:
    return {s: 0.0 for s in store.segments if not s.startswith(keep)}


def _operator_config(ts, iters, nets, store, frozen=None):
    """Stage config for the operator nets: frozen segments pinned to zero,
    two-block nets split between lr_psi and lr_g when those are set."""
    base = ts.lr_g if ts.lr_g > 0.0 else ts.lr
    per = dict(frozen or {})
    if ts.lr_psi > 0.0:
        for net in nets:
            if hasattr(net, "inner_segments"):
                for s in net.inner_segments(store):
                    if per.get(s, 1.0) != 0.0:
                        per[s] = ts.lr_psi
    return replace(make_train_config(ts, iters=iters), lr=base,
                   lr_per_segment=per)


def _qr_state(trunk, store, queries, prior: Checkpoint | None) -> QRState:
    if prior is not None and "qr.R" in prior.extra:
        phi = trunk_matrix_np(trunk, store, queries)
        return QRState(phi, None, prior.extra["qr.R"], prior.extra["qr.T"],
                       prior.extra["qr.A_star"])
    return qr_factorize(trunk, store, queries)


def _train_operator(cfg: RunConfig, run_dir: Path,
                    prior: Checkpoint | None) -> None:
    p = cfg.problem
    _require(p.dataset != "", "problem.dataset",
             "path to a dataset (datagen burgers)")
    _require(cfg.train.rba is None, "train.rba",
             "attention multipliers are per point; operator terms carry "
             "one residual row per function")
    arrays, _ = read_arrays(p.dataset)
    queries = arrays["queries"]
    v_train, u_train = arrays["v_train"], arrays["u_train"]
    v_test, u_test = arrays["v_test"], arrays["u_test"]
    n1 = p.embedding_dim
    branch = build_model(cfg.model, d=arrays["sensors"].size, out_dim=n1,
                         name="br")
    trunk = build_model(cfg.model, d=2, out_dim=n1 - 1, name="tr")
    store = ParamStore()
    branch.init(store, child_rng(cfg.seed, "init", "br"))
    trunk.init(store, child_rng(cfg.seed, "init", "tr"))
    ts, dg = cfg.train, cfg.diag
    n_probe = _probe_size(v_train.shape[0], dg.snr_batches)

    if p.variant == "deeponet":
        _require(ts.iters >= 1, "train.iters", "must be positive")
        net = DeepONet(branch, trunk)
        term = make_deeponet_term(net, v_train, u_train, queries,
                                  batch=ts.batch or None,
                                  sampler=pick_sampler(ts))
        probe = make_deeponet_probe(net, v_train, u_train, queries,
                                    n_batches=dg.snr_batches,
                                    cadence=dg.snr_every)
        trainer = Trainer(store, [term],
                          _operator_config(ts, ts.iters, (branch, trunk), store),
                          seed=cfg.seed)
        _drive(trainer, store, cfg, run_dir, stage="main", prior=prior,
               eval_fn=make_deeponet_eval(net, v_test, u_test, queries),
               probe=probe)
        return

    _require(ts.stage1_iters >= 1, "train.stage1_iters", "must be positive")
    _require(ts.stage2_iters >= 1, "train.stage2_iters", "must be positive")
    term1 = qr_stage1_term(trunk, store, queries, u_train.T, seed=cfg.seed)
    if prior is not None:
        restore_params(store, prior.params)
    stage1_done = prior is not None and (
        prior.stage == "stage2" or (prior.stage == "stage1" and prior.done))
    if not stage1_done:
        probe1 = SNRProbe(residual=term1.residual, n=n_probe,
                          n_batches=dg.snr_batches, cadence=dg.snr_every)
        tc1 = _operator_config(ts, ts.stage1_iters, (trunk,), store,
                               _freeze(store, keep=("tr.", "qr.")))
        trainer1 = Trainer(store, [term1], tc1, seed=cfg.seed)
        _drive(trainer1, store, cfg, run_dir, stage="stage1",
               prior=prior if prior is not None and prior.stage == "stage1"
               else None,
               metrics="metrics_stage1.csv", probe=probe1)
    state = _qr_state(trunk, store, queries, prior)
    extras = {"qr.R": state.r, "qr.T": state.t, "qr.A_star": state.a_star}
    term2 = qr_stage2_term(branch, v_train, state.target)
    probe2 = SNRProbe(residual=term2.residual, n=n_probe,
                      n_batches=dg.snr_batches, cadence=dg.snr_every)
    tc2 = _operator_config(ts, ts.stage2_iters, (branch,), store,
                           _freeze(store, keep=("br.",)))
    trainer2 = Trainer(store, [term2], tc2, seed=cfg.seed)
    _drive(trainer2, store, cfg, run_dir, stage="stage2",
           prior=prior if prior is not None and prior.stage == "stage2"
           else None,
           extra=extras, eval_fn=make_qr_eval(branch, state, v_test, u_test),
           probe=probe2)


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, raw={**cfg.raw, "seed": args.seed})
    _require(cfg.model is not None, "model", "missing section")
    run_dir = Path(args.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    prior = None
    if args.resume and (run_dir / "checkpoint" / MANIFEST).exists():
        prior = load_checkpoint(run_dir / "checkpoint")
    started = _utc_now()
    kind = cfg.problem.kind
    try:
        if kind in ("discontinuous", "smooth"):
            _require(cfg.train.iters >= 1, "train.iters", "must be positive")
            _train_fa(cfg, run_dir, prior)
        elif kind == "allen-cahn":
            _require(cfg.train.iters >= 1, "train.iters", "must be positive")
            _train_ac(cfg, run_dir, prior)
        else:
            _train_operator(cfg, run_dir, prior)
    except TrainDiverged as e:
        write_run_manifest(run_dir, config=cfg.raw, seed=cfg.seed,
                           started=started, finished=_utc_now(),
                           status="diverged")
        print(f"error: training diverged: {e}", file=sys.stderr)
        return 1
    write_run_manifest(run_dir, config=cfg.raw, seed=cfg.seed,
                       started=started, finished=_utc_now())
    print(f"run complete: {run_dir}")
    return 0


# ---------------------------------------------------------------------------
# datagen
# ---------------------------------------------------------------------------

def cmd_datagen(args) -> int:
    seed = args.seed
    p = None
    raw_problem = {}
    if args.config:
        cfg = load_config(args.config)
        p = cfg.problem
        raw_problem = cfg.raw.get("problem", {})
        if seed is None:
            seed = cfg.seed
    seed = 0 if seed is None else seed
    out = Path(args.out)
    if args.kind == "burgers":
        n_train = p.n_train if p is not None and p.n_train > 0 else 256
        n_test = p.n_test if p is not None else 64
        m_x = p.m_x if p is not None else 100
        grid = p.grid if p is not None else (33, 33)
        ds = build_burgers_dataset(n_train, n_test, m_x, seed, grid=grid)
        manifest = write_arrays(out, ds.arrays(), meta={
            "kind": "burgers", "seed": seed, "nu": ds.nu, "n_train": n_train,
            "n_test": n_test, "m_x": m_x, "grid": list(grid)})
    else:
        nt, nx = p.grid if p is not None and "grid" in raw_problem \
            else AC_REF_GRID
        modes = p.ref_modes if p is not None else 2048
        dt = p.ref_dt if p is not None else 1e-3
        t, x, U = allen_cahn_reference(modes, dt, nx_out=nx, nt_out=nt)
        manifest = write_arrays(out, {"t": t, "x": x, "U": U}, meta={
            "kind": "allen-cahn-ref", "seed": seed, "modes": modes, "dt": dt,
            "grid": [nt, nx]})
    print(f"dataset written: {out} ({len(manifest['arrays'])} arrays)")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _need_arrays(arrays: dict, names) -> None:
    for name in names:
        if name not in arrays:
            raise RuntimeError(f"dataset is missing array {name!r}")


def _eval_points(cfg: RunConfig, ck: Checkpoint, arrays: dict) -> dict:
    _need_arrays(arrays, ("X", "y"))
    X, y = arrays["X"], np.asarray(arrays["y"]).ravel()
    if X.shape[0] == 0:
        raise RuntimeError("dataset is empty")
    model = build_model(cfg.model, d=X.shape[1], name="f",
                        periodic_cols=_fa_embed_cols(cfg))
    store = model.init(ParamStore(), child_rng(cfg.seed, "init", "f"))
    restore_params(store, ck.params)
    pred = model.predict(store, X).ravel()
    per = np.abs(pred - y)
    return {"kind": cfg.problem.kind, "rel_l2": relative_l2(y, pred),
            "per_sample": per.tolist(), "n": int(per.size)}


def _eval_ac(cfg: RunConfig, ck: Checkpoint, arrays: dict) -> dict:
    _need_arrays(arrays, ("t", "x", "U"))
    t, x, U = arrays["t"], arrays["x"], arrays["U"]
    if U.size == 0:
        raise RuntimeError("dataset is empty")
    model = build_model(cfg.model, d=2, name="u", periodic_cols=(1,))
    store = model.init(ParamStore(), child_rng(cfg.seed, "init", "u"))
    restore_params(store, ck.params)
    tt, xx = np.meshgrid(t, x, indexing="ij")
    pred = model.predict(store,
                         np.column_stack([tt.ravel(), xx.ravel()]))
    pred = pred.reshape(U.shape)
    per = [relative_l2(U[i], pred[i]) for i in range(t.size)]
    return {"kind": "allen-cahn", "rel_l2": relative_l2(U.ravel(), pred.ravel()),
            "per_sample": per, "n": len(per)}


def _eval_operator(cfg: RunConfig, ck: Checkpoint, arrays: dict) -> dict:
    _need_arrays(arrays, ("sensors", "queries", "v_test", "u_test"))
    V, U, Y = arrays["v_test"], arrays["u_test"], arrays["queries"]
    if V.shape[0] == 0:
        raise RuntimeError("dataset is empty")
    n1 = cfg.problem.embedding_dim
    branch = build_model(cfg.model, d=arrays["sensors"].size, out_dim=n1,
                         name="br")
    trunk = build_model(cfg.model, d=2, out_dim=n1 - 1, name="tr")
    store = ParamStore()
    branch.init(store, child_rng(cfg.seed, "init", "br"))
    trunk.init(store, child_rng(cfg.seed, "init", "tr"))
    if cfg.problem.variant == "qr":
        if "qr.A" not in ck.params:
            raise RuntimeError("checkpoint lacks the stage-1 matrix")
        store.add("qr.A", np.asarray(ck.params["qr.A"], dtype=float))
        restore_params(store, ck.params)
        for need in ("qr.R", "qr.T", "qr.A_star"):
            if need not in ck.extra:
                raise RuntimeError(f"checkpoint is missing {need!r}")
        state = QRState(trunk_matrix_np(trunk, store, Y), None,
                        ck.extra["qr.R"], ck.extra["qr.T"],
                        ck.extra["qr.A_star"])
        pred = qr_predict(branch, store, state, V)
    else:
        restore_params(store, ck.params)
        pred = deeponet_predict(DeepONet(branch, trunk), store, V, Y)
    per = [relative_l2(U[i], pred[i]) for i in range(V.shape[0])]
    return {"kind": "burgers", "variant": cfg.problem.variant,
            "rel_l2": float(np.mean(per)), "per_sample": per, "n": len(per)}


def cmd_eval(args) -> int:
    ck = load_checkpoint(Path(args.checkpoint))
    if not ck.config:
        raise RuntimeError("checkpoint carries no config")
    cfg = parse_config(ck.config)
    arrays, _ = read_arrays(Path(args.dataset))
    kind = cfg.problem.kind
    if kind == "burgers":
        report = _eval_operator(cfg, ck, arrays)
    elif kind == "allen-cahn":
        report = _eval_ac(cfg, ck, arrays)
    else:
        report = _eval_points(cfg, ck, arrays)
    payload = json.dumps(report, indent=1)
    if args.out:
        Path(args.out).write_text(payload + "\n")
    else:
        print(payload)
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _series_points(series: dict, name: str):
    vals = series[name]
    keep = ~np.isnan(vals)
    return series["iteration"][keep].astype(int), vals[keep]


def _term_coords(cfg: RunConfig) -> dict:
    kind = cfg.problem.kind
    if kind in ("discontinuous", "smooth"):
        X, _ = fa_training_data(kind, cfg.problem.n_train, cfg.seed)
        return {"data": X}
    if kind == "allen-cahn":
        X_ic, _ = allen_cahn_ic_points(cfg.problem.n_ic)
        return {"pde": allen_cahn_collocation(cfg.problem.n_colloc, cfg.seed),
                "ic": X_ic}
    return {}


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    streams = [p for p in (run_dir / "metrics_stage1.csv",
                           run_dir / "metrics.csv") if p.exists()]
    if not streams:
        raise RuntimeError(f"no metrics found under {run_dir}")
    out = Path(args.out) if args.out else run_dir / "report"
    out.mkdir(parents=True, exist_ok=True)
    written = []

    curves = []
    snr_source = None
    gc_source = None
    for path in streams:
        tag = "stage1:" if path.name == "metrics_stage1.csv" else ""
        columns, series = read_metrics_csv(path)
        for name in columns:
            if (name.startswith("loss_") or name.startswith("mean_abs_r_")
                    or name == "rel_l2"):
                its, vals = _series_points(series, name)
                curves += [(i, tag + name, v) for i, v in zip(its, vals)]
        # the untagged stream is the headline one; stage 1 only fills in
        # when the run never reached it
        if "snr" in series and (snr_source is None or not tag):
            snr_source = _series_points(series, "snr")
        if "gc" in series and not tag:
            gc_source = _series_points(series, "gc")
    _write_csv(out / "error_curves.csv", ["iteration", "series", "value"],
               curves)
    written.append("error_curves.csv")

    if snr_source is not None:
        its, vals = snr_source
        labels = [""] * its.size
        stages = detect_stages(its, vals)
        if stages is not None:
            for stage_name, (a, b) in stages.items():
                for j, i in enumerate(its):
                    if a <= i <= b:
                        labels[j] = stage_name
        _write_csv(out / "snr_series.csv", ["iteration", "snr", "stage"],
                   list(zip(its, vals, labels)))
        written.append("snr_series.csv")

    if gc_source is not None:
        _write_csv(out / "complexity_series.csv", ["iteration", "gc"],
                   list(zip(*gc_source)))
        written.append("complexity_series.csv")

    ck_dir = run_dir / "checkpoint"
    if (ck_dir / MANIFEST).exists():
        ck = load_checkpoint(ck_dir)
        lam = (ck.trainer_state or {}).get("lam") or {}
        if lam and ck.config:
            coords = _term_coords(parse_config(ck.config))
            rows = []
            for term in sorted(lam):
                pts = coords.get(term)
                if pts is None or pts.shape[0] != lam[term].size:
                    continue
                rows += [(term, pts[i, 0], pts[i, 1], lam[term][i])
                         for i in range(pts.shape[0])]
            if rows:
                _write_csv(out / "rba_heatmap.csv",
                           ["term", "x0", "x1", "lam"], rows)
                written.append("rba_heatmap.csv")

    print(f"report written: {out} ({', '.join(written)})")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="kanlab",
        description="train, evaluate, and report on the workbench models")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one experiment from a TOML config")
    t.add_argument("--config", required=True, help="path to the run config")
    t.add_argument("--out", required=True, help="run directory")
    t.add_argument("--seed", type=int, help="override the config seed")
    t.add_argument("--resume", action="store_true",
                   help="pick up from the run checkpoint if present")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("datagen", help="generate a dataset bundle")
    d.add_argument("kind", choices=["burgers", "allen-cahn-ref"])
    d.add_argument("--config", help="optional config whose [problem] "
                                    "section sizes the dataset")
    d.add_argument("--seed", type=int, help="override the config seed")
    d.add_argument("--out", required=True, help="dataset directory")
    d.set_defaults(func=cmd_datagen)

    e = sub.add_parser("eval", help="score a checkpoint against a dataset")
    e.add_argument("checkpoint", help="checkpoint directory")
    e.add_argument("dataset", help="dataset directory")
    e.add_argument("--out", help="write the JSON report here instead of stdout")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="pivot a run's metrics into "
                                      "plot-ready tables")
    r.add_argument("run_dir", help="run directory holding metrics CSVs")
    r.add_argument("--out", help="report directory (default: run_dir/report)")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
