"""Command-line entry point: ``flowprox <command> --config <path>``.

Commands map one-to-one onto the verification workflows: ``train``,
``spectrum``, ``lyapunov``, ``prox_check``, ``converge``, ``sample``.
Every command is a pure function of its config file (identical inputs
give byte-identical outputs), writes a machine-readable ``summary.json``,
and exits 0 only if all internal checks pass.
"""

import os

_threads = os.environ.get("FLOWPROX_THREADS")
if _threads:
    # must land before numpy spins up its BLAS thread pools
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import flow, lyapunov, neural, proxcheck, transport
from .datasets import dataset_from_config, sample as sample_dataset
from .field import ConditionalField, ExactProxField, LearnedField
from .potential import minibatch_prox_convergence, potential_from_config
from .schedule import Schedule
from .transport import PointCloud

__all__ = ["main", "ConfigError"]


class ConfigError(ValueError):
    pass


def _check_keys(cfg: dict, allowed: set, required: set, ctx: str):
    if not isinstance(cfg, dict):
        raise ConfigError(f"{ctx}: expected an object")
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"{ctx}: unknown keys {sorted(unknown)}")
    missing = required - set(cfg)
    if missing:
        raise ConfigError(f"{ctx}: missing keys {sorted(missing)}")


def _field_from_config(cfg: dict):
    _check_keys(cfg, {"kind", "potential", "schedule", "checkpoint", "x0", "x1"},
                {"kind", "schedule"}, "field")
    sched = Schedule.from_config(cfg["schedule"])
    kind = cfg["kind"]
    if kind == "exact":
        if "potential" not in cfg:
            raise ConfigError("field: exact kind needs a potential")
        return ExactProxField(potential_from_config(cfg["potential"]), sched)
    if kind == "learned":
        if "checkpoint" not in cfg:
            raise ConfigError("field: learned kind needs a checkpoint")
        return LearnedField(neural.load_checkpoint(cfg["checkpoint"]), sched)
    if kind == "conditional":
        if "x0" not in cfg or "x1" not in cfg:
            raise ConfigError("field: conditional kind needs x0 and x1")
        return ConditionalField(np.asarray(cfg["x0"], dtype=float),
                                np.asarray(cfg["x1"], dtype=float), sched)
    raise ConfigError(f"field: unknown kind {kind!r}")


def _write_summary(out_dir: Path, payload: dict):
    with open(out_dir / "summary.json", "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def cmd_train(cfg: dict, out_dir: Path, seed_override) -> int:
    _check_keys(cfg, {"dataset", "schedule", "train"},
                {"dataset", "schedule", "train"}, "train config")
    tcfg = cfg["train"]
    _check_keys(tcfg, {"batch_size", "steps", "lr", "seed", "adam_betas",
                       "hidden_dims", "activation"},
                {"batch_size", "steps", "lr", "seed"}, "train.train")
    train_config = neural.TrainConfig(
        batch_size=int(tcfg["batch_size"]), steps=int(tcfg["steps"]),
        lr=float(tcfg["lr"]), schedule=Schedule.from_config(cfg["schedule"]),
        seed=int(seed_override if seed_override is not None else tcfg["seed"]),
        adam_betas=tuple(tcfg.get("adam_betas", (0.9, 0.999))),
        hidden_dims=tuple(tcfg.get("hidden_dims", (128, 128, 128))),
        activation=tcfg.get("activation", "silu"))
    data = dataset_from_config(cfg["dataset"])
    model, losses = neural.train_otcfm(data, train_config)
    neural.save_checkpoint(model, out_dir / "model.ckpt")
    _write_csv(out_dir / "loss.csv", ["step", "loss"],
               [(i, float(v)) for i, v in enumerate(losses)])
    final_loss = float(losses[-1])
    print(f"final loss: {final_loss:.6g}")
    _write_summary(out_dir, {
        "command": "train", "ok": True, "final_loss": final_loss,
        "steps": train_config.steps,
        "artifacts": ["model.ckpt", "loss.csv"]})
    return 0


def cmd_spectrum(cfg: dict, out_dir: Path, seed_override) -> int:
    _check_keys(cfg, {"field", "starts", "t_grid", "seed", "steps"},
                {"field", "starts", "t_grid", "seed"}, "spectrum config")
    field = _field_from_config(cfg["field"])
    seed = int(seed_override if seed_override is not None else cfg["seed"])
    report = lyapunov.jacobian_spectrum(
        field, int(cfg["starts"]), [float(t) for t in cfg["t_grid"]],
        seed=seed, steps=int(cfg.get("steps", 1200)))
    d = field.dim
    header = ["t"]
    for j in range(d):
        header += [f"eig{j + 1}_mean", f"eig{j + 1}_std"]
    rows = []
    for i, t in enumerate(report.t_grid):
        row = [float(t)]
        for j in range(d):
            row += [float(report.mean[i, j]), float(report.std[i, j])]
        rows.append(row)
    _write_csv(out_dir / "spectrum.csv", header, rows)
    _write_summary(out_dir, {
        "command": "spectrum", "ok": True,
        "n_trajectories": report.n_trajectories,
        "n_complex_flagged": [int(v) for v in report.n_complex_flagged],
        "final_mean": [float(v) for v in report.mean[-1]],
        "artifacts": ["spectrum.csv"]})
    return 0


def cmd_lyapunov(cfg: dict, out_dir: Path, seed_override) -> int:
    _check_keys(cfg, {"field", "x_start", "directions", "tau_max", "seed"},
                {"field", "x_start", "directions", "tau_max"}, "lyapunov config")
    field = _field_from_config(cfg["field"])
    tau_max = float(cfg["tau_max"])
    if tau_max < 4.0:
        print("warning: tau_max < 4 leaves little room for the asymptotic fit",
              file=sys.stderr)
    report = lyapunov.terminal_exponents(
        field, np.asarray(cfg["x_start"], dtype=float),
        np.asarray(cfg["directions"], dtype=float), tau_max)
    payload = {
        "directions": [[float(v) for v in row] for row in report.directions],
        "exponents": [float(v) for v in report.exponents],
        "fit_window": [float(report.fit_window[0]), float(report.fit_window[1])],
        "residuals": [float(v) for v in report.residuals],
    }
    with open(out_dir / "exponents.json", "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_summary(out_dir, {"command": "lyapunov", "ok": True,
                             "exponents": payload["exponents"],
                             "artifacts": ["exponents.json"]})
    return 0


def cmd_prox_check(cfg: dict, out_dir: Path, seed_override) -> int:
    _check_keys(cfg, {"seed"}, {"seed"}, "prox_check config")
    seed = int(seed_override if seed_override is not None else cfg["seed"])
    checks = proxcheck.run_default_suite(seed=seed)
    ok = all(c["ok"] for c in checks)
    with open(out_dir / "prox_check.json", "w", newline="\n") as fh:
        json.dump(checks, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for c in checks:
        print(f"{'PASS' if c['ok'] else 'FAIL'} {c['name']}: "
              f"value={c['value']:.3e} tol={c['tolerance']:.3e}")
    _write_summary(out_dir, {"command": "prox_check", "ok": ok, "checks": checks,
                             "artifacts": ["prox_check.json"]})
    return 0 if ok else 1


def cmd_converge(cfg: dict, out_dir: Path, seed_override) -> int:
    _check_keys(cfg, {"population", "dataset", "n_list", "lambda", "grid",
                      "c", "seed", "t_start", "start_radius"},
                {"population", "dataset", "n_list", "lambda", "grid", "c", "seed"},
                "converge config")
    _check_keys(cfg["population"], {"potential", "schedule"},
                {"potential", "schedule"}, "converge.population")
    _check_keys(cfg["grid"], {"lo", "hi", "points"}, {"lo", "hi", "points"},
                "converge.grid")
    c = float(cfg["c"])
    if not 0.0 < c < 1.0:
        raise ConfigError(f"converge: c must be in (0, 1), got {c}")
    seed = int(seed_override if seed_override is not None else cfg["seed"])
    phi = potential_from_config(cfg["population"]["potential"])
    sched = Schedule.from_config(cfg["population"]["schedule"])
    data = dataset_from_config(cfg["dataset"])
    n_list = [int(n) for n in cfg["n_list"]]
    lo, hi, pts = (float(cfg["grid"]["lo"]), float(cfg["grid"]["hi"]),
                   int(cfg["grid"]["points"]))
    axis = np.linspace(lo, hi, pts)
    if phi.dim == 1:
        grid = PointCloud(axis[:, None])
    else:
        grid = PointCloud(np.stack(
            np.meshgrid(*([axis] * phi.dim)), axis=-1).reshape(-1, phi.dim))
    prox_rows = minibatch_prox_convergence(
        phi, data, n_list, float(cfg["lambda"]), grid, seed)
    table = flow.convergence_study(
        ExactProxField(phi, sched), data, n_list, c, seed,
        t_start=float(cfg.get("t_start", 0.05)),
        start_radius=float(cfg.get("start_radius", 1.5)))
    rows = [(n, float(sup), float(te), float(w2))
            for (n, sup), (_, te, w2) in zip(prox_rows, table.rows())]
    _write_csv(out_dir / "convergence.csv",
               ["n", "prox_sup_error", "traj_error_at_c", "w2_at_c"], rows)
    _write_summary(out_dir, {"command": "converge", "ok": True,
                             "rows": rows, "artifacts": ["convergence.csv"]})
    return 0


def cmd_sample(cfg: dict, out_dir: Path, seed_override) -> int:
    _check_keys(cfg, {"field", "n", "t1", "seed", "steps", "heldout"},
                {"field", "n", "t1", "seed"}, "sample config")
    field = _field_from_config(cfg["field"])
    seed = int(seed_override if seed_override is not None else cfg["seed"])
    cloud = flow.sample_pushforward(
        field, int(cfg["n"]), float(cfg["t1"]), seed,
        steps=int(cfg.get("steps", 2000)))
    transport.save_point_cloud_csv(cloud, out_dir / "samples.csv")
    summary = {"command": "sample", "ok": True, "n": cloud.n,
               "artifacts": ["samples.csv"]}
    if "heldout" in cfg:
        hcfg = cfg["heldout"]
        _check_keys(hcfg, {"dataset", "seed"}, {"dataset"}, "sample.heldout")
        held = sample_dataset(dataset_from_config(hcfg["dataset"]), cloud.n,
                              int(hcfg.get("seed", seed + 1)))
        summary["w2_to_heldout"] = transport.empirical_w2(cloud, held)
    _write_summary(out_dir, summary)
    return 0


_COMMANDS = {
    "train": cmd_train,
    "spectrum": cmd_spectrum,
    "lyapunov": cmd_lyapunov,
    "prox_check": cmd_prox_check,
    "converge": cmd_converge,
    "sample": cmd_sample,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="flowprox",
        description="Proximal-operator tooling for OT conditional flow matching")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    args = parser.parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        return _COMMANDS[args.command](cfg, out_dir, args.seed)
    except (ConfigError, ValueError, TypeError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
