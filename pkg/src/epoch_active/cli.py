"""Experiment harness CLI: configuration, orchestration, persistence.

Subcommands
-----------
* ``run``: active-learner sweeps plus passive baselines at matched label
  counts; writes ``results.csv`` and per-run ``runs/<id>.artifact`` files.
* ``verify``: assumption checks (region-restricted gap condition) and
  surrogate-vs-classification bound checks; writes ``verify.csv`` and exits
  nonzero when anything is violated.
* ``theta``: disagreement-coefficient estimates over (gamma, epsilon) grids
  into ``theta.csv``.
* ``report``: aggregate a ``results.csv`` into rate-fit summaries and
  plot-ready columns.

``results.csv`` carries the fixed header
``trial,n,N,excess_class_risk,stderr,excess_surrogate_risk,query_mass_final,wall_ms,seed``;
rows are ordered (trial, n, mode) with the active row before its passive
twin.  Floats are serialized with 9 significant digits so reruns under a
fixed seed diff cleanly (wall_ms, a measured duration, is the one column
exempt from byte identity).
"""

import argparse
import concurrent.futures
import json
import logging
import os
import struct
import sys
import time

import numpy as np

from . import evaluation, learner
from .distributions import (InstanceSpec, example1, example2, example2_class,
                            example1_symmetric_region, full_region,
                            linf_approx_realizable, massart_linear,
                            tsybakov_linear, verify_assumption)
from .funcclass import (BINARY_BALL_LINEAR, MULTICLASS_LINEAR,
                        TWO_POINT_BINARY, ClassSpec, random_feasible)
from .learner import LearnerConfig, query_mass, run as run_learner
from .oracle import CompFormula, OracleConfig
from .surrogate import SurrogateSpec
from .version_space import DisagreeConfig

logger = logging.getLogger("epoch_active.cli")

RESULTS_HEADER = ("trial,n,N,excess_class_risk,stderr,excess_surrogate_risk,"
                  "query_mass_final,wall_ms,seed")
ARTIFACT_MAGIC = b"EPAC1\x00"


class ConfigError(ValueError):
    def __init__(self, fieldname: str, message: str):
        super().__init__(f"config field {fieldname!r}: {message}")
        self.fieldname = fieldname


def _get(cfg: dict, fieldname: str, typ, default=None, required=False):
    parts = fieldname.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.get(p, {}) if isinstance(node, dict) else {}
    if not isinstance(node, dict) or parts[-1] not in node:
        if required:
            raise ConfigError(fieldname, "missing")
        return default
    value = node[parts[-1]]
    try:
        if typ is float:
            return float(value)
        if typ is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError("not an integer")
            return int(value)
        if typ is bool:
            if not isinstance(value, bool):
                raise ValueError("not a boolean")
            return value
        if typ is str:
            if not isinstance(value, str):
                raise ValueError("not a string")
            return value
        if typ is list:
            if not isinstance(value, list):
                raise ValueError("not a list")
            return value
        if typ is dict:
            if not isinstance(value, dict):
                raise ValueError("not an object")
            return value
    except (TypeError, ValueError) as exc:
        raise ConfigError(fieldname, str(exc)) from exc
    return value


def build_instance(cfg: dict) -> InstanceSpec:
    kind = _get(cfg, "instance.kind", str, required=True)
    seed = _get(cfg, "instance.seed", int, 0)
    d = _get(cfg, "instance.d", int, 1)
    try:
        if kind == "example1":
            return example1(d, seed)
        if kind == "example2":
            return example2(_get(cfg, "instance.gamma", float, 0.1),
                            _get(cfg, "instance.delta_prime", float, 0.01),
                            seed)
        if kind == "massart_linear":
            return massart_linear(d, _get(cfg, "instance.gamma", float,
                                          required=True), seed)
        if kind == "tsybakov_linear":
            return tsybakov_linear(d, _get(cfg, "instance.beta", float,
                                           required=True), seed)
        if kind == "linf_approx_realizable":
            return linf_approx_realizable(
                d, _get(cfg, "instance.eps", float, required=True),
                _get(cfg, "instance.gamma", float, required=True), seed)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("instance", str(exc)) from exc
    raise ConfigError("instance.kind", f"unknown kind {kind!r}")


def build_class(cfg: dict, inst: InstanceSpec) -> ClassSpec:
    node = _get(cfg, "class", dict, None)
    if node is None:
        if inst.kind == "example2":
            return example2_class(inst)
        return ClassSpec(BINARY_BALL_LINEAR, d=inst.d)
    kind = _get(cfg, "class.kind", str, required=True)
    d = _get(cfg, "class.d", int, inst.d)
    try:
        if kind == BINARY_BALL_LINEAR:
            return ClassSpec(kind, d=d)
        if kind == MULTICLASS_LINEAR:
            return ClassSpec(kind, d=d, k=_get(cfg, "class.k", int, 2),
                             radius=_get(cfg, "class.radius", float, 1.0))
        if kind == TWO_POINT_BINARY:
            values = _get(cfg, "class.values", list, None)
            if values is None:
                if inst.kind != "example2":
                    raise ConfigError("class.values", "missing")
                return example2_class(inst)
            return ClassSpec(kind, d=d, values=tuple(float(v) for v in values))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("class", str(exc)) from exc
    raise ConfigError("class.kind", f"unknown kind {kind!r}")


def build_surrogate(cfg: dict, cls: ClassSpec) -> SurrogateSpec:
    kind = _get(cfg, "surrogate.kind", str, "squared")
    if kind == "squared":
        return SurrogateSpec.squared()
    if kind == "logistic":
        bound = _get(cfg, "surrogate.score_bound", float,
                     cls.radius * cls.x_bound)
        return SurrogateSpec.logistic(bound, cls.k)
    raise ConfigError("surrogate.kind", f"unknown kind {kind!r}")


def build_learner_config(cfg: dict, n: int, cls: ClassSpec) -> LearnerConfig:
    delta = _get(cfg, "learner.delta", float, 0.05)
    if not 0.0 < delta < 1.0:
        raise ConfigError("learner.delta", f"{delta} outside (0, 1)")
    comp = CompFormula(
        _get(cfg, "learner.comp.kind", str, "pdim_log"),
        _get(cfg, "learner.comp.pdim", float, float(cls.n_params)),
        _get(cfg, "learner.comp.c0", float, 1.0))
    oracle_cfg = OracleConfig(
        _get(cfg, "learner.oracle.max_iters", int, 2000),
        _get(cfg, "learner.oracle.step_rule", str, "backtracking"),
        _get(cfg, "learner.oracle.step_size", float, 1.0),
        _get(cfg, "learner.oracle.grad_tol", float, 1e-8),
        _get(cfg, "learner.oracle.seed", int, 0))
    disagree_cfg = DisagreeConfig(
        _get(cfg, "learner.disagree.restarts", int, 4),
        _get(cfg, "learner.disagree.max_iters", int, 200),
        _get(cfg, "learner.disagree.tol", float, 1e-7),
        _get(cfg, "learner.disagree.conservative_on_uncertain", bool, True))
    try:
        return LearnerConfig(n=n, delta=delta,
                             b_constant=_get(cfg, "learner.b_constant", float, 1.0),
                             comp=comp, oracle_cfg=oracle_cfg,
                             disagree_cfg=disagree_cfg,
                             seed=_get(cfg, "learner.seed", int, 0))
    except ValueError as exc:
        raise ConfigError("learner", str(exc)) from exc


def build_psi(node: dict):
    kind = node.get("kind", "identity")
    if kind == "identity":
        return lambda t: t
    if kind == "linear":
        slope = float(node.get("slope", 1.0))
        return lambda t: slope * t
    if kind == "power":
        scale = float(node.get("scale", 1.0))
        exponent = float(node.get("exponent", 1.0))
        return lambda t: scale * t ** exponent
    if kind == "hinge":
        threshold = float(node.get("threshold", 0.0))
        return lambda t: max(0.0, t - threshold)
    raise ConfigError("verify.psi.kind", f"unknown kind {kind!r}")


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("<file>", str(exc)) from exc
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    return cfg


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_, int, np.integer)):
        return str(int(x))
    return format(float(x), ".9g")


def _write_csv(path: str, header: str, rows, comment: str = ""):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
            fh.flush()


def _row_seed(base: int, trial: int, n: int, salt: int) -> int:
    ss = np.random.SeedSequence([base, trial, n, salt])
    return int(ss.generate_state(1, np.uint32)[0])


def _run_cell(cfg: dict, trial: int, n: int):
    """One sweep cell: the active run and its matched passive baseline."""
    inst = build_instance(cfg)
    cls = build_class(cfg, inst)
    spec = build_surrogate(cfg, cls)
    mc_eval = _get(cfg, "mc_eval", int, 20000)
    base_seed = _get(cfg, "learner.seed", int, 0)

    seed_active = _row_seed(base_seed, trial, n, 0)
    lcfg = build_learner_config(cfg, n, cls)
    lcfg = LearnerConfig(n=n, delta=lcfg.delta, b_constant=lcfg.b_constant,
                         comp=lcfg.comp, oracle_cfg=lcfg.oracle_cfg,
                         disagree_cfg=lcfg.disagree_cfg, seed=seed_active)
    t0 = time.perf_counter()
    stitched, trace = run_learner(inst, cls, spec, lcfg)
    cls_risk, cls_se = evaluation.excess_class_risk(
        lambda X: learner.predict_batch(stitched, X, lcfg.disagree_cfg),
        inst, mc_eval, seed_active)
    sur_risk, _ = evaluation.excess_surrogate_risk_of_last_epoch(
        inst, cls, spec, stitched, mc_eval, seed_active)
    qmass, _ = query_mass(stitched, len(stitched.epochs), mc_eval, inst,
                          seed_active, lcfg.disagree_cfg)
    wall_active = (time.perf_counter() - t0) * 1e3
    active_row = (trial, n, trace.n_queries, cls_risk, cls_se, sur_risk,
                  qmass, wall_active, seed_active)

    seed_passive = _row_seed(base_seed, trial, n, 1)
    t0 = time.perf_counter()
    n_labels = max(trace.n_queries, 1)
    report = evaluation.passive_baseline(inst, cls, spec, n_labels,
                                         lcfg.oracle_cfg, seed_passive, mc_eval)
    wall_passive = (time.perf_counter() - t0) * 1e3
    passive_row = (trial, n, n_labels, report.excess_class_risk,
                   report.class_stderr, report.excess_surrogate_risk, 1.0,
                   wall_passive, seed_passive)
    artifact = {
        "trial": trial,
        "n": n,
        "seed": seed_active,
        "config": cfg,
        "epochs": [{"queried": r[0], "radius_b": r[1], "fit_converged": r[2]}
                   for r in trace.epochs],
        "class": {"kind": cls.kind, "d": cls.d, "k": cls.k,
                  "radius": cls.radius},
    }
    params_blobs = [np.asarray(rec.fitted, dtype=np.float64).ravel()
                    for rec in stitched.epochs]
    return active_row, passive_row, artifact, params_blobs


def write_artifact(path: str, header: dict, params_blobs):
    """Binary run artifact: magic, JSON header, then flat float64 params."""
    header = dict(header)
    header["params_lengths"] = [int(b.size) for b in params_blobs]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(ARTIFACT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for b in params_blobs:
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def read_artifact(path: str):
    with open(path, "rb") as fh:
        magic = fh.read(len(ARTIFACT_MAGIC))
        if magic != ARTIFACT_MAGIC:
            raise ValueError("not a run artifact")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        blobs = []
        for length in header.get("params_lengths", []):
            blobs.append(np.frombuffer(fh.read(8 * length), dtype="<f8").copy())
    return header, blobs


def cmd_run(cfg: dict, out_dir: str, jobs: int = 1) -> int:
    sweep = _get(cfg, "sweep", list, required=True)
    if not sweep or sorted(sweep) != sweep or len(set(sweep)) != len(sweep):
        raise ConfigError("sweep", "must be a non-empty strictly increasing list")
    trials = _get(cfg, "trials", int, 1)
    if trials < 1:
        raise ConfigError("trials", "must be >= 1")
    # validate eagerly so config errors exit before any work
    inst = build_instance(cfg)
    cls = build_class(cfg, inst)
    build_surrogate(cfg, cls)
    build_learner_config(cfg, int(sweep[0]), cls)

    os.makedirs(out_dir, exist_ok=True)
    runs_dir = os.path.join(out_dir, "runs")
    os.makedirs(runs_dir, exist_ok=True)
    cells = [(t, int(n)) for t in range(trials) for n in sweep]
    results = {}
    failed = False
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_run_cell, cfg, t, n): (t, n)
                       for (t, n) in cells}
            for fut in concurrent.futures.as_completed(futures):
                key = futures[fut]
                try:
                    results[key] = fut.result()
                except Exception as exc:  # runtime failure: flush what we have
                    logger.error("cell %s failed: %s", key, exc)
                    failed = True
    else:
        for key in cells:
            try:
                results[key] = _run_cell(cfg, *key)
            except Exception as exc:
                logger.error("cell %s failed: %s", key, exc)
                failed = True
                break

    rows = []
    for key in cells:  # fixed (trial, n, mode) order regardless of completion
        if key not in results:
            continue
        active_row, passive_row, artifact, blobs = results[key]
        rows.append(active_row)
        rows.append(passive_row)
        write_artifact(os.path.join(runs_dir, f"t{key[0]}_n{key[1]}.artifact"),
                       artifact, blobs)
    _write_csv(os.path.join(out_dir, "results.csv"), RESULTS_HEADER, rows,
               comment=f"generated {time.strftime('%Y-%m-%dT%H:%M:%S')}")
    return 1 if failed else 0


def cmd_verify(cfg: dict, out_dir: str) -> int:
    inst = build_instance(cfg)
    cls = build_class(cfg, inst)
    spec = build_surrogate(cfg, cls)
    psi = build_psi(_get(cfg, "verify.psi", dict, {"kind": "identity"}))
    samples = _get(cfg, "verify.samples", int, 100000)
    seed = _get(cfg, "verify.seed", int, 0)
    region_kind = _get(cfg, "verify.regions", str, "full")
    if region_kind == "full":
        regions = [full_region()]
    elif region_kind == "example1_symmetric":
        if inst.kind != "example1":
            raise ConfigError("verify.regions",
                              "example1_symmetric needs an example1 instance")
        regions = [example1_symmetric_region(sub)
                   for sub in _all_nonempty_subsets(inst.d)]
    else:
        raise ConfigError("verify.regions", f"unknown kind {region_kind!r}")

    rows = []
    report = verify_assumption(inst, cls, spec, psi, regions, samples,
                               seed=seed)
    ok = report.ok
    for r in report.regions:
        rows.append(("assumption", r.name, r.checked, r.violations,
                     r.worst_deficit, int(r.skipped)))

    bound_node = _get(cfg, "verify.bound_check", dict, None)
    if bound_node is not None:
        n_random = int(bound_node.get("n_random", 5))
        gamma_grid = [float(g) for g in bound_node.get(
            "gamma_grid", list(np.linspace(0.01, 0.5, 25)))]
        mc = int(bound_node.get("mc", 20000))
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB0B]))
        if cls.is_finite:
            candidates = cls.members()
        else:
            candidates = [random_feasible(cls, rng) for _ in range(n_random)]
        for i, params in enumerate(candidates):
            check = evaluation.check_passive_bound(inst, cls, spec, params,
                                                   psi, gamma_grid, "binary",
                                                   mc, seed)
            ok = ok and check.passed
            rows.append(("bound", f"f{i}", check.lhs, check.min_rhs,
                         check.argmin_gamma, int(check.passed)))
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, "verify.csv"),
               "check,name,a,b,c,flag", rows,
               comment="assumption rows: checked/violations/worst_deficit/skipped; "
                       "bound rows: lhs/min_rhs/argmin_gamma/passed")
    return 0 if ok else 1


def cmd_theta(cfg: dict, out_dir: str, gamma_grid, epsilon_grid) -> int:
    inst = build_instance(cfg)
    cls = build_class(cfg, inst)
    spec = build_surrogate(cfg, cls)
    if any(g <= 0 for g in gamma_grid):
        raise ConfigError("gamma-grid", "gamma values must be positive")
    if any(e <= 0 for e in epsilon_grid):
        raise ConfigError("epsilon-grid", "epsilon values must be positive")
    seed = _get(cfg, "theta.seed", int, 0)
    mc = _get(cfg, "theta.mc", int, 5000)
    restarts = _get(cfg, "theta.restarts", int, 4)
    norm_mode = _get(cfg, "theta.norm_mode", str, "as_written")
    f_star = inst.best_in_class(cls)
    if f_star is None:
        from .oracle import fit_on_region

        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF57A]))
        f_star = fit_on_region(inst, cls, spec, None, mc,
                               OracleConfig(), rng).params
    rows = []
    for g in gamma_grid:
        for e in epsilon_grid:
            est = evaluation.estimate_theta(inst, cls, f_star, g, e, mc,
                                            restarts, seed, norm_mode)
            rows.append((g, e, est.value, est.event_probability, est.stderr,
                         int(est.ridged)))
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, "theta.csv"),
               "gamma,epsilon,value,event_probability,stderr,ridged", rows)
    return 0


def cmd_report(out_dir: str) -> int:
    path = os.path.join(out_dir, "results.csv")
    if not os.path.exists(path):
        logger.error("no results.csv under %s", out_dir)
        return 1
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("trial,"):
                continue
            parts = line.split(",")
            rows.append(tuple(float(p) for p in parts))
    # rows alternate active/passive within each (trial, n) cell
    active = rows[0::2]
    passive = rows[1::2]
    by_n = {}
    for row in active:
        by_n.setdefault(int(row[1]), []).append(row)
    agg = []
    for n in sorted(by_n):
        group = np.asarray(by_n[n])
        agg.append((n, group[:, 2].mean(), group[:, 3].mean(),
                    group[:, 3].std(ddof=1) if group.shape[0] > 1 else 0.0,
                    group[:, 6].mean()))
    _write_csv(os.path.join(out_dir, "report.csv"),
               "n,mean_queries,mean_excess_risk,risk_sd,mean_query_mass", agg)
    sweep = [(row[0], row[1], row[2]) for row in agg]
    msg_lines = []
    if len([r for r in sweep if r[2] > 0]) >= 4:
        fitres = evaluation.rate_fit(sweep)
        msg_lines.append(
            f"log-log slopes vs 1/risk: n {fitres.slope_n:.3f} "
            f"(r2 {fitres.r2_n:.3f}), queries {fitres.slope_queries:.3f} "
            f"(r2 {fitres.r2_queries:.3f})")
    else:
        msg_lines.append("too few usable sweep points for a rate fit")
    for n, nq, risk, sd, qm in agg:
        msg_lines.append(f"n={n}: queries={nq:.1f} risk={risk:.5f} "
                         f"query_mass={qm:.4f}")
    passive_by_n = {}
    for row in passive:
        passive_by_n.setdefault(int(row[1]), []).append(row[3])
    for n in sorted(passive_by_n):
        msg_lines.append(f"n={n}: passive@N risk="
                         f"{np.mean(passive_by_n[n]):.5f}")
    print("\n".join(msg_lines))
    return 0


def _all_nonempty_subsets(d: int):
    out = []
    for mask in range(1, 2 ** d):
        out.append([i for i in range(d) if mask >> i & 1])
    return out


def _parse_grid(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from exc


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="epoch-active",
        description="Active-learning experiment harness")
    parser.add_argument("command",
                        choices=["run", "verify", "theta", "report"])
    parser.add_argument("--config", help="JSON config path")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the learner seed")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--gamma-grid", default="0.1",
                        help="comma separated, theta command")
    parser.add_argument("--epsilon-grid", default="0.1",
                        help="comma separated, theta command")
    args = parser.parse_args(argv)

    level = os.environ.get("EPOCH_ACTIVE_LOG", "error").lower()
    logging.basicConfig(level={"error": logging.ERROR, "info": logging.INFO,
                               "debug": logging.DEBUG}.get(level, logging.ERROR))

    try:
        if args.command == "report":
            return cmd_report(args.out or ".")
        if not args.config:
            raise ConfigError("--config", "missing")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.setdefault("learner", {})["seed"] = args.seed
        out_dir = args.out or _get(cfg, "output_dir", str, "out")
        if args.command == "run":
            return cmd_run(cfg, out_dir, args.jobs)
        if args.command == "verify":
            return cmd_verify(cfg, out_dir)
        if args.command == "theta":
            return cmd_theta(cfg, out_dir, _parse_grid(args.gamma_grid),
                             _parse_grid(args.epsilon_grid))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        logger.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
