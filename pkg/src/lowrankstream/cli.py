"""Experiment runner: reproducible runs wired from config files and flags.

Subcommands: gen-synth, track-matrix, track-matrix-sgd, track-tensor,
batch-solve, detect-anomalies.  Every run writes its fully resolved config
(defaults included) into the output JSON so the same artifact can be rerun
bit-for-bit; metrics stream to CSV and are flushed at every checkpoint.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import batch, stream_io
from .anomaly import RoutingMatrix, detection_rates, lasso_solve
from .data import SynthMatrixConfig, SynthTensorConfig, gen_matrix_stream, gen_tensor_stream
from .exceptions import ConfigError, NonconvergenceError, SingularSystemError
from .matrix_tracker import MatrixTracker, average_cost, average_cost_gradient
from .metrics import RunningRelativeError, slice_relative_error
from .sgd_tracker import SgdTracker
from .tensor_tracker import TensorTracker, completion_dof_ok

MODES = ("gen-synth", "track-matrix", "track-matrix-sgd", "track-tensor",
         "batch-solve", "detect-anomalies")


@dataclass
class RunConfig:
    """Resolved settings for one run; dumped verbatim into the output JSON."""

    mode: str = ""
    # synthetic generation
    kind: str = "matrix"
    P: int = 100
    r: int = 5
    M: int = 50
    N: int = 50
    R: int = 5
    sigma: float = 0.0
    pi: float = 1.0
    horizon: int = 1000
    change_at: Optional[int] = None
    change_mode: str = "redraw"
    out_stem: str = "stream"
    # tracking
    input: Optional[str] = None
    truth: Optional[str] = None
    rank: int = 10
    theta: float = 1.0
    lam: Optional[float] = None
    lambda_policy: str = "fixed"
    rls: bool = False
    eta: float = 2.0
    mu0: float = 1.0
    accelerated: bool = False
    mu_bar: float = 100.0
    step_mode: str = "constant"
    checkpoint_every: int = 500
    # batch solve
    y_csv: Optional[str] = None
    mask_csv: Optional[str] = None
    rho: int = 10
    tol: float = 1e-9
    max_iter: int = 5000
    # anomalies
    routing_csv: Optional[str] = None
    residual_csv: Optional[str] = None
    lambda_o: float = 0.1
    xi: float = 0.5
    # common
    seed: int = 0
    out_dir: str = "."

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")
        if self.tol <= 0:
            raise ConfigError("tol must be > 0")
        if self.mode == "gen-synth" and self.kind not in ("matrix", "tensor"):
            raise ConfigError(f"kind must be matrix or tensor, got {self.kind!r}")
        if self.mode in ("track-matrix", "track-matrix-sgd", "track-tensor"):
            if self.input is None:
                raise ConfigError(f"{self.mode} requires --input")
            if self.lam is None and self.lambda_policy == "fixed":
                raise ConfigError("fixed lambda policy requires --lam")
            if self.lambda_policy == "noise_adaptive" and self.sigma is None:
                raise ConfigError("noise_adaptive requires sigma and pi")
        if self.mode == "batch-solve":
            if self.y_csv is None or self.mask_csv is None:
                raise ConfigError("batch-solve requires --y-csv and --mask-csv")
            if self.lam is None:
                raise ConfigError("batch-solve requires --lam")
        if self.mode == "detect-anomalies":
            if self.routing_csv is None or self.residual_csv is None:
                raise ConfigError(
                    "detect-anomalies requires --routing-csv and --residual-csv"
                )


def _fmt(x) -> str:
    return "{:.17g}".format(x)


def _load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        known = {f.name for f in dataclasses.fields(RunConfig)}
        bad = set(payload) - known
        if bad:
            raise ConfigError(f"unknown config keys: {sorted(bad)}")
        for key, value in payload.items():
            setattr(cfg, key, value)
    for key, value in vars(args).items():
        if key in ("config", "func") or value is None:
            continue
        setattr(cfg, key, value)
    cfg.mode = args.mode
    cfg.validate()
    return cfg


def _write_state(cfg: RunConfig, path: Path, extra: dict):
    payload = {"config": dataclasses.asdict(cfg)}
    payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_gen_synth(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = out / cfg.out_stem
    if cfg.kind == "matrix":
        gen_cfg = SynthMatrixConfig(P=cfg.P, r=cfg.r, sigma=cfg.sigma,
                                    pi=cfg.pi, seed=cfg.seed,
                                    change_at=cfg.change_at,
                                    change_mode=cfg.change_mode)
        observations, truth = [], []
        for obs, x in gen_matrix_stream(gen_cfg, cfg.horizon):
            observations.append(obs)
            truth.append((obs.t, x))
        stream_io.write_triplet_stream(observations, f"{stem}.csv")
        stream_io.write_matrix_truth(truth, f"{stem}_truth.csv")
    else:
        gen_cfg = SynthTensorConfig(M=cfg.M, N=cfg.N, R=cfg.R,
                                    sigma=cfg.sigma, pi=cfg.pi, seed=cfg.seed)
        observations, truth = [], []
        for slc, X in gen_tensor_stream(gen_cfg, cfg.horizon):
            observations.append(slc)
            truth.append((slc.t, X))
        stream_io.write_triplet_stream(observations, f"{stem}.csv")
        stream_io.write_tensor_truth(truth, f"{stem}_truth.csv")
    _write_state(cfg, stem.parent / f"{cfg.out_stem}_run.json",
                 {"rows_written": cfg.horizon})
    return 0


def _matrix_inputs(cfg: RunConfig):
    observations = stream_io.read_triplet_stream(f"{cfg.input}.csv")
    truth = None
    truth_path = Path(f"{cfg.input}_truth.csv") if cfg.truth is None else Path(cfg.truth)
    if truth_path.exists():
        truth = stream_io.read_matrix_truth(truth_path)
    return observations, truth


def _track_matrix_common(cfg: RunConfig, tracker, loss_lam) -> int:
    observations, truth = _matrix_inputs(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.csv"
    err = RunningRelativeError()
    history = []
    t0 = time.perf_counter()
    with open(metrics_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,e_x,cost,grad_norm\n")
        for obs in observations:
            history.append(obs)
            q, x_hat = tracker.step(obs)
            e_field = ""
            if truth is not None and obs.t in truth:
                e_field = _fmt(err.update(x_hat, truth[obs.t]))
            cost_field = grad_field = ""
            checkpoint = obs.t % cfg.checkpoint_every == 0
            if checkpoint and cfg.theta == 1.0:
                L = tracker.L
                lam_now = loss_lam(tracker)
                cost_field = _fmt(average_cost(L, history, lam_now))
                grad_field = _fmt(np.linalg.norm(
                    average_cost_gradient(L, history, lam_now)))
            fh.write(f"{obs.t},{e_field},{cost_field},{grad_field}\n")
            if checkpoint:
                fh.flush()
    per_step = (time.perf_counter() - t0) / max(len(observations), 1)
    _write_state(cfg, out / "state.json", {
        "steps": len(observations),
        "subspace_shape": list(np.shape(tracker.L)),
        "final_lambda": tracker.lam if hasattr(tracker, "lam") else cfg.lam,
        "final_e_x": err.value if truth is not None else None,
        "wall_clock_per_step_sec": per_step,
    })
    return 0


def _cmd_track_matrix(cfg: RunConfig) -> int:
    desc = stream_io.read_descriptor(f"{cfg.input}.json")
    tracker = MatrixTracker(
        ambient_dim=int(desc["P"]), rank=cfg.rank, theta=cfg.theta,
        lam=cfg.lam if cfg.lam is not None else 1.0,
        lambda_policy=cfg.lambda_policy, sigma=cfg.sigma, pi=cfg.pi,
        mode="rls" if cfg.rls else "direct", seed=cfg.seed,
    )
    return _track_matrix_common(cfg, tracker, lambda tr: tr.lam)


def _cmd_track_matrix_sgd(cfg: RunConfig) -> int:
    desc = stream_io.read_descriptor(f"{cfg.input}.json")
    if cfg.theta != 1.0:
        raise ConfigError("the SGD tracker is defined for theta == 1 only")
    tracker = SgdTracker(
        ambient_dim=int(desc["P"]), rank=cfg.rank, lam=cfg.lam, eta=cfg.eta,
        mu0=cfg.mu0, accelerated=cfg.accelerated, seed=cfg.seed,
    )
    return _track_matrix_common(cfg, tracker, lambda tr: tr.lam)


def _cmd_track_tensor(cfg: RunConfig) -> int:
    desc = stream_io.read_descriptor(f"{cfg.input}.json")
    M, N = int(desc["M"]), int(desc["N"])
    observations = stream_io.read_triplet_stream(f"{cfg.input}.csv")
    truth = None
    truth_path = Path(f"{cfg.input}_truth.csv") if cfg.truth is None else Path(cfg.truth)
    if truth_path.exists():
        truth = stream_io.read_tensor_truth(truth_path, (M, N))
    tracker = TensorTracker(
        dims=(M, N), rank_bound=cfg.rank, lam=cfg.lam, sigma=cfg.sigma,
        pi=cfg.pi, mu_bar=cfg.mu_bar, step_mode=cfg.step_mode, seed=cfg.seed,
    )
    if not completion_dof_ok(M, N, len(observations), cfg.rank, cfg.pi):
        print("warning: observed samples fall short of the factor "
              "degrees of freedom; recovery is not identifiable",
              file=sys.stderr)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("t,e_x\n")
        for slc in observations:
            _, X_hat = tracker.step(slc)
            e_field = ""
            if truth is not None and slc.t in truth:
                e_field = _fmt(slice_relative_error(X_hat, truth[slc.t]))
            fh.write(f"{slc.t},{e_field}\n")
            if slc.t % cfg.checkpoint_every == 0:
                fh.flush()
    per_step = (time.perf_counter() - t0) / max(len(observations), 1)
    _write_state(cfg, out / "state.json", {
        "steps": len(observations),
        "factor_shapes": [list(tracker.A.shape), list(tracker.B.shape)],
        "lambda": tracker.lam,
        "wall_clock_per_step_sec": per_step,
    })
    return 0


def _cmd_batch_solve(cfg: RunConfig) -> int:
    Y = stream_io.read_dense_matrix(cfg.y_csv)
    mask = stream_io.read_dense_matrix(cfg.mask_csv) > 0.5
    prob = batch.BatchProblem(Y, mask, lam=cfg.lam, rho=cfg.rho)
    X_hat, info = batch.solve_p1(prob, tol=cfg.tol, max_iter=cfg.max_iter,
                                 full_output=True)
    (L, Q), info2 = batch.solve_p2(prob, tol=cfg.tol, max_iter=cfg.max_iter,
                                   init=batch.svd_split(X_hat, cfg.rho),
                                   full_output=True)
    cert = batch.certify_global(L, Q, prob)
    kkt = batch.kkt_check_p1(X_hat, prob, L=L, Q=Q)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stream_io.write_dense_matrix(X_hat, out / "xhat.csv")
    _write_state(cfg, out / "certificate.json", {
        "p1_objective": info["objective"],
        "p1_iterations": info["iterations"],
        "p2_objective": info2["objective"],
        "certificate": cert.as_dict(),
        "kkt": kkt.as_dict(),
    })
    return 0


def read_routing_csv(path) -> RoutingMatrix:
    """Routing file: header ``link,flow,fraction`` with 1-based ids."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "link,flow,fraction":
            raise ConfigError(f"expected header link,flow,fraction in {path}")
        for line in fh:
            if not line.strip():
                continue
            ell, f, frac = line.strip().split(",")
            rows.append((int(ell), int(f), float(frac)))
    if not rows:
        raise ConfigError(f"routing file {path} is empty")
    n_links = max(r[0] for r in rows)
    n_flows = max(r[1] for r in rows)
    R = np.zeros((n_links, n_flows))
    for ell, f, frac in rows:
        R[ell - 1, f - 1] = frac
    return RoutingMatrix(R, [str(i + 1) for i in range(n_links)],
                         [str(j + 1) for j in range(n_flows)])


def write_routing_csv(routing: RoutingMatrix, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("link,flow,fraction\n")
        for ell, f in zip(*np.nonzero(routing.R)):
            fh.write(f"{ell + 1},{f + 1},{_fmt(routing.R[ell, f])}\n")


def _read_series_csv(path, header):
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != header:
            raise ConfigError(f"expected header {header} in {path}")
        for line in fh:
            if not line.strip():
                continue
            t_s, i_s, v_s = line.strip().split(",")
            out.setdefault(int(t_s), {})[int(i_s)] = float(v_s)
    return out


def _cmd_detect_anomalies(cfg: RunConfig) -> int:
    routing = read_routing_csv(cfg.routing_csv)
    residuals = _read_series_csv(cfg.residual_csv, "t,link,value")
    truth = None
    if cfg.truth is not None:
        truth = _read_series_csv(cfg.truth, "t,flow,value")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    times = sorted(residuals)
    est_hist, true_hist = [], []
    warm = None
    with open(out / "ohat.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("t,flow,o_hat\n")
        for t in times:
            y = np.zeros(routing.n_links)
            seen = np.zeros(routing.n_links, dtype=bool)
            for ell, v in residuals[t].items():
                y[ell - 1] = v
                seen[ell - 1] = True
            o_hat = np.zeros(routing.n_flows)
            keep = ((routing.R[seen]) ** 2).sum(axis=0) > 0
            if seen.any() and keep.any():
                o_hat[keep] = lasso_solve(
                    routing.R[seen][:, keep], y[seen], cfg.lambda_o,
                    tol=1e-8, x0=None if warm is None else warm[keep],
                )
            warm = o_hat
            est_hist.append(o_hat)
            for f in np.flatnonzero(np.abs(o_hat) >= cfg.xi):
                fh.write(f"{t},{f + 1},{_fmt(o_hat[f])}\n")
            if truth is not None:
                row = np.zeros(routing.n_flows)
                for f, v in truth.get(t, {}).items():
                    row[f - 1] = v
                true_hist.append(row)
    extra = {"steps": len(times)}
    if truth is not None and true_hist:
        p_d, p_fa = detection_rates(np.array(true_hist), np.array(est_hist),
                                    cfg.xi)
        extra.update({"P_D": p_d, "P_FA": p_fa})
    _write_state(cfg, out / "rates.json", extra)
    return 0


_COMMANDS = {
    "gen-synth": _cmd_gen_synth,
    "track-matrix": _cmd_track_matrix,
    "track-matrix-sgd": _cmd_track_matrix_sgd,
    "track-tensor": _cmd_track_tensor,
    "batch-solve": _cmd_batch_solve,
    "detect-anomalies": _cmd_detect_anomalies,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lowrankstream",
        description="streaming low-rank tracking, imputation and scoring",
    )
    sub = parser.add_subparsers(dest="mode", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)

    p = sub.add_parser("gen-synth", help="write a synthetic stream + truth")
    common(p)
    p.add_argument("--kind", choices=("matrix", "tensor"))
    p.add_argument("--P", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--R", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--pi", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--change-at", dest="change_at", type=int)
    p.add_argument("--change-mode", dest="change_mode",
                   choices=("redraw", "perturb"))
    p.add_argument("--out-stem", dest="out_stem")

    for name in ("track-matrix", "track-matrix-sgd"):
        p = sub.add_parser(name, help="run a subspace tracker over a stream")
        common(p)
        p.add_argument("--input", help="stream stem (expects .csv and .json)")
        p.add_argument("--truth")
        p.add_argument("--rank", type=int)
        p.add_argument("--lam", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--pi", type=float)
        if name == "track-matrix":
            p.add_argument("--theta", type=float)
            p.add_argument("--lambda-policy", dest="lambda_policy",
                           choices=("fixed", "noise_adaptive"))
            p.add_argument("--rls", action="store_const", const=True)
        else:
            p.add_argument("--eta", type=float)
            p.add_argument("--mu0", type=float)
            p.add_argument("--accelerated", action="store_const", const=True)

    p = sub.add_parser("track-tensor", help="run the PARAFAC slice tracker")
    common(p)
    p.add_argument("--input")
    p.add_argument("--truth")
    p.add_argument("--rank", type=int, help="factor width R_hat")
    p.add_argument("--lam", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--pi", type=float)
    p.add_argument("--mu-bar", dest="mu_bar", type=float)
    p.add_argument("--step-mode", dest="step_mode",
                   choices=("constant", "linear"))

    p = sub.add_parser("batch-solve", help="batch oracle + certificates")
    common(p)
    p.add_argument("--y-csv", dest="y_csv")
    p.add_argument("--mask-csv", dest="mask_csv")
    p.add_argument("--lam", type=float)
    p.add_argument("--rho", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)

    p = sub.add_parser("detect-anomalies", help="lasso over link residuals")
    common(p)
    p.add_argument("--routing-csv", dest="routing_csv")
    p.add_argument("--residual-csv", dest="residual_csv")
    p.add_argument("--truth")
    p.add_argument("--lambda-o", dest="lambda_o", type=float)
    p.add_argument("--xi", type=float)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        return _COMMANDS[cfg.mode](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NonconvergenceError, SingularSystemError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
