"""Command line front end: simulate, identify, validate, detect, roc.

Every subcommand reads a YAML config (``--config``) mirroring
:class:`RunConfig`; a few fields can be overridden by flags. Outputs are
computed completely before any file is written.

Exit codes: 0 success, 1 numerical failure, 2 I/O or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import anomaly, pls
from .estimators import DynamicsIdentifier
from .io import FormatError, dataset_to_csv, dumps, format_rows, read_dataset, read_json, read_parameter_file
from .model import ModelError, load_model_file, model_to_dict, reference_model_path
from .pls import ConvergenceError
from .regressors import (ParameterLayout, parameter_labels, predict_measurements, row_labels,
                         stack_dataset)
from .sim import ContactEpisode, GroundTruth, NoiseLevels, generate_trajectory, random_ground_truth, simulate_measurements
from .signal import estimate_derivatives

log = logging.getLogger("armident")

EXIT_OK, EXIT_NUMERIC, EXIT_IO = 0, 1, 2


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """Numerical failure inside a named pipeline stage."""


@dataclass
class SimulationConfig:
    output: str = "dataset.csv"
    duration: float = 300.0
    rate: float = 100.0
    truth_seed: int = 1
    truth: str | None = None
    noise: dict = field(default_factory=dict)
    contacts: list = field(default_factory=list)
    limits: list | None = None
    freq_range: tuple = (0.05, 0.5)


@dataclass
class RunConfig:
    model: str = ""
    out: str = "out"
    seed: int = 0
    alpha: float = 0.99
    nu: int | None = None
    nu_policy: str = "rank"
    rank_tol: float = 1e-8
    window: int = 11
    degree: int = 3
    center: bool = False
    scale: bool = False
    dof: str = "latent"
    identify_dataset: str | None = None
    validate_dataset: str | None = None
    detect_dataset: str | None = None
    compare_params: str | None = None
    simulate: SimulationConfig = field(default_factory=SimulationConfig)
    base_dir: Path = field(default=Path("."), repr=False)

    def path(self, value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def out_dir(self) -> Path:
        return self.path(self.out)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    known = {f.name for f in fields(RunConfig)} - {"base_dir"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    sim_doc = doc.pop("simulate", None) or {}
    sim_known = {f.name for f in fields(SimulationConfig)}
    if set(sim_doc) - sim_known:
        raise ConfigError(f"{path}: unknown simulate keys {sorted(set(sim_doc) - sim_known)}")
    cfg = RunConfig(**doc, simulate=SimulationConfig(**sim_doc), base_dir=path.parent)
    if not 0.0 < float(cfg.alpha) < 1.0:
        raise ConfigError(f"alpha must be in (0, 1), got {cfg.alpha}")
    if not cfg.model:
        raise ConfigError("config has no model path")
    return cfg


def _load_model(cfg: RunConfig):
    if cfg.model == "reference":
        return load_model_file(reference_model_path())
    p = cfg.path(cfg.model)
    if not p.is_file():
        raise FileNotFoundError(f"model file not found: {p}")
    return load_model_file(p)


def _need(cfg: RunConfig, attr: str) -> Path:
    value = getattr(cfg, attr)
    if not value:
        raise ConfigError(f"config has no {attr!r}")
    p = cfg.path(value)
    if not p.is_file():
        raise FileNotFoundError(f"{attr} not found: {p}")
    return p


def _write_all(files: dict):
    for path, text in files.items():
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        log.info("wrote %s", path)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (np.linalg.LinAlgError, ConvergenceError, ArithmeticError, FloatingPointError) as exc:
        raise StageError(f"{name}: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, (FormatError, ModelError, ConfigError)):
            raise
        raise StageError(f"{name}: {exc}") from exc


# -- simulate ----------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> dict:
    model = _load_model(cfg)
    sc = cfg.simulate
    noise = NoiseLevels(**sc.noise)
    contacts = tuple(
        ContactEpisode(float(c["start"]), float(c["end"]), tuple(float(x) for x in c["wrench"]),
                       int(c["body"]))
        for c in sc.contacts
    )
    if sc.truth:
        base = GroundTruth.from_dict(read_json(cfg.path(sc.truth)))
        truth = GroundTruth(base.phi, noise, contacts)
        if truth.phi.size != ParameterLayout.for_model(model).size:
            raise ConfigError("ground-truth parameter vector does not match the model")
    else:
        truth = random_ground_truth(model, sc.truth_seed, noise, contacts)
    traj = _stage("simulate", generate_trajectory, model.n_joints, sc.duration, sc.rate,
                  cfg.seed, limits=sc.limits, freq_range=tuple(sc.freq_range))
    data = _stage("simulate", simulate_measurements, model, truth, traj, cfg.seed + 1)

    out = cfg.out_dir / sc.output
    sidecar = out.with_suffix(".truth.json")
    doc = truth.to_dict()
    doc["labels"] = parameter_labels(model)
    doc["model"] = model_to_dict(model)
    files = {out: dataset_to_csv(data), sidecar: dumps(doc)}
    _write_all(files)
    return {"rows": len(data), "dataset": str(out), "truth": str(sidecar)}


# -- identify ----------------------------------------------------------

def _unit_gains(model, Phi):
    lay = ParameterLayout.for_model(model)
    Phi = np.array(Phi, dtype=float)
    Phi[lay.gains_coupled] = 1.0
    Phi[lay.gains_uncoupled] = 1.0
    return Phi


def _error_table(model, Phi, data, pwm_hat=None, wrench_hat=None):
    """Measurement-space prediction errors in the layout of a force/torque
    table: mean and std of the force and moment error norms, per PWM channel
    mean and std of the absolute error."""
    if wrench_hat is None:
        try:
            pwm_hat, wrench_hat = predict_measurements(model, Phi, data.q, data.dq, data.ddq)
        except FloatingPointError:
            # a zero drive gain leaves the PWM undefined; wrenches are still fine
            pwm_hat = "n/a"
            _, wrench_hat = predict_measurements(model, _unit_gains(model, Phi),
                                                 data.q, data.dq, data.ddq)
    ef = np.linalg.norm(wrench_hat[:, :3] - data.wrench[:, :3], axis=1)
    et = np.linalg.norm(wrench_hat[:, 3:] - data.wrench[:, 3:], axis=1)
    table = {
        "force": {"mean": float(ef.mean()), "std": float(ef.std())},
        "torque": {"mean": float(et.mean()), "std": float(et.std())},
    }
    if isinstance(pwm_hat, str):
        for i, j in enumerate(model.measured_joints):
            table[f"pwm{i}"] = {"joint": j, "mean": "n/a", "std": "n/a"}
    elif pwm_hat is not None:
        for i, j in enumerate(model.measured_joints):
            e = np.abs(pwm_hat[:, i] - data.pwm[:, i])
            table[f"pwm{i}"] = {"joint": j, "mean": float(e.mean()), "std": float(e.std())}
    return table


def _identify(cfg, model, data):
    ident = DynamicsIdentifier(
        model, n_components=cfg.nu, policy=cfg.nu_policy, rank_tol=cfg.rank_tol,
        center=cfg.center, scale=cfg.scale, window=cfg.window, degree=cfg.degree,
    )
    return ident.fit(data)


def cmd_identify(cfg: RunConfig) -> dict:
    model = _load_model(cfg)
    data = read_dataset(_need(cfg, "identify_dataset"), model)
    data = _stage("derivatives", estimate_derivatives, data, cfg.window, cfg.degree)
    ident = _stage("identify", _identify, cfg, model, data)

    resid_rms = float(np.sqrt(np.mean(ident.training_residuals_**2)))
    floor_rms = resid_rms
    if cfg.nu is None and cfg.nu_policy == "rank":
        rank = ident.n_components_
    else:
        A, b = stack_dataset(model, data)
        rank = pls.select_latent_count(A, policy="rank", tol=cfg.rank_tol,
                                       center=cfg.center, scale=cfg.scale)
        if ident.n_components_ < rank:
            # least-squares floor: the best any parameter vector can do
            x, *_ = np.linalg.lstsq(A, b, rcond=None)
            floor_rms = float(np.sqrt(np.mean((b - A @ x) ** 2)))
    # "underfit": fewer latent variables than the regressor rank and a
    # residual clearly above the least-squares floor
    underfit = ident.n_components_ < rank and resid_rms > 1.1 * floor_rms

    Phi = ident.coef_
    report = {
        "stage": "identify",
        "samples": len(data),
        "n_components": ident.n_components_,
        "regressor_rank": rank,
        "residual_rms": resid_rms,
        "least_squares_residual_rms": floor_rms,
        "underfit": bool(underfit),
        "row_residual_std": dict(zip(row_labels(model),
                                     ident.training_residuals_.std(axis=0, ddof=1))),
        "prediction_error": _error_table(model, Phi, data),
    }
    params = {"labels": parameter_labels(model), "values": Phi, "n_components": ident.n_components_}
    model_doc = {
        "pls": pls.model_to_dict(ident.pls_),
        "residual_stats": (None if ident.residual_stats_ is None
                           else ident.residual_stats_.to_dict()),
        "row_labels": row_labels(model),
        "model": model_to_dict(model),
        "window": cfg.window,
        "degree": cfg.degree,
    }
    out = cfg.out_dir
    _write_all({
        out / "params.json": dumps(params),
        out / "pls_model.json": dumps(model_doc),
        out / "identify_report.json": dumps(report),
    })
    return report


def _load_identified(cfg: RunConfig, model):
    path = cfg.out_dir / "pls_model.json"
    if not path.is_file():
        raise FileNotFoundError(f"identified model not found: {path} (run 'identify' first)")
    doc = read_json(path)
    est = pls.model_from_dict(doc["pls"])
    if doc.get("residual_stats") is None:
        raise StageError("T^2 threshold: the identification residuals have zero variance "
                         "(noise-free data?); cannot monitor with T^2")
    stats = anomaly.ResidualStats.from_dict(doc["residual_stats"])
    if est.n_features_in_ != ParameterLayout.for_model(model).size:
        raise ConfigError("identified model does not match the chain model")
    if doc.get("model") != model_to_dict(model):
        raise ConfigError("identified model was fitted on a different chain model")
    return est, stats


def _trace_text(t, t2, flags, threshold, labels=None):
    header = f"# t2_alpha={threshold!r}\n"
    cols = [t, t2, flags.astype(np.int64)]
    names = ["t", "t2", "exceeds"]
    if labels is not None:
        cols.append(np.asarray(labels).astype(np.int64))
        names.append("contact")
    return header + format_rows(names, cols)


# -- validate ----------------------------------------------------------

def cmd_validate(cfg: RunConfig) -> dict:
    model = _load_model(cfg)
    est, stats = _load_identified(cfg, model)
    data = read_dataset(_need(cfg, "validate_dataset"), model)
    data = _stage("derivatives", estimate_derivatives, data, cfg.window, cfg.degree)
    compare = None
    if cfg.compare_params:
        compare = read_parameter_file(_need(cfg, "compare_params"), est.n_features_in_)

    det = _stage("validate", anomaly.detect_contacts, data, model, est, stats, cfg.alpha, cfg.dof)
    table = {"estimated": _error_table(model, est.coef_, data)}
    if compare is not None:
        _, wrench = predict_measurements(model, compare, data.q, data.dq, data.ddq)
        table["compared"] = _error_table(model, compare, data, wrench_hat=wrench)
    report = {
        "stage": "validate",
        "samples": len(data),
        "alpha": cfg.alpha,
        "t2_alpha": det.threshold,
        "exceedance_rate": float(det.flags.mean()),
        "prediction_error": table,
    }
    out = cfg.out_dir
    _write_all({
        out / "validate_report.json": dumps(report),
        out / "validate_t2.csv": _trace_text(data.t, det.t2, det.flags, det.threshold),
    })
    return report


# -- detect / roc ------------------------------------------------------

def _detection(cfg):
    model = _load_model(cfg)
    est, stats = _load_identified(cfg, model)
    data = read_dataset(_need(cfg, "detect_dataset"), model)
    data = _stage("derivatives", estimate_derivatives, data, cfg.window, cfg.degree)
    det = _stage("detect", anomaly.detect_contacts, data, model, est, stats, cfg.alpha, cfg.dof)
    return data, det


def cmd_detect(cfg: RunConfig) -> dict:
    data, det = _detection(cfg)
    labels = data.contact if data.contact is not None else np.zeros(len(data), dtype=bool)
    tpr, fpr = anomaly.rates(det.flags, labels)
    report = {
        "stage": "detect",
        "samples": len(data),
        "alpha": cfg.alpha,
        "t2_alpha": det.threshold,
        "flagged": int(det.flags.sum()),
        "true_positive_rate": "n/a" if tpr is None else tpr,
        "false_positive_rate": "n/a" if fpr is None else fpr,
    }
    out = cfg.out_dir
    _write_all({
        out / "detect_report.json": dumps(report),
        out / "detect_trace.csv": _trace_text(data.t, det.t2, det.flags, det.threshold, labels),
    })
    return report


def cmd_roc(cfg: RunConfig) -> dict:
    data, det = _detection(cfg)
    if data.contact is None:
        raise ConfigError("roc needs a dataset with a 'contact' column")
    curve = _stage("roc", anomaly.roc_curve, det.t2, data.contact)
    finite = np.isfinite(curve[:, 2])
    marker = np.zeros(len(curve), dtype=np.int64)
    gap = np.where(finite, np.abs(curve[:, 2] - det.threshold), np.inf)
    marker[int(np.argmin(gap))] = 1
    text = format_rows(["fpr", "tpr", "threshold", "at_alpha"],
                       [curve[:, 0], curve[:, 1], curve[:, 2], marker])
    report = {
        "stage": "roc",
        "points": len(curve),
        "auc": anomaly.roc_auc(curve),
        "t2_alpha": det.threshold,
        "operating_point": {"fpr": float(curve[marker == 1, 0][0]),
                            "tpr": float(curve[marker == 1, 1][0])},
    }
    out = cfg.out_dir
    _write_all({out / "roc.csv": text, out / "roc_report.json": dumps(report)})
    return report


COMMANDS = {
    "simulate": cmd_simulate,
    "identify": cmd_identify,
    "validate": cmd_validate,
    "detect": cmd_detect,
    "roc": cmd_roc,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="armident", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--alpha", type=float, help="T^2 confidence level")
        p.add_argument("--nu", type=int, help="number of latent variables")
        p.add_argument("--seed", type=int, help="simulation seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--dataset", help="dataset path for this command")
    return parser


_DATASET_ATTR = {
    "identify": "identify_dataset",
    "validate": "validate_dataset",
    "detect": "detect_dataset",
    "roc": "detect_dataset",
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.alpha is not None:
            if not 0.0 < args.alpha < 1.0:
                raise ConfigError(f"alpha must be in (0, 1), got {args.alpha}")
            cfg.alpha = args.alpha
        if args.nu is not None:
            cfg.nu = args.nu
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = str(Path(args.out).resolve())
        if args.dataset is not None:
            value = str(Path(args.dataset).resolve())
            if args.command == "simulate":
                cfg.simulate.output = value
            else:
                setattr(cfg, _DATASET_ATTR[args.command], value)
        result = COMMANDS[args.command](cfg)
    except (OSError, ConfigError, ModelError, FormatError, TypeError) as exc:
        print(f"armident {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except StageError as exc:
        print(f"armident {args.command}: numerical failure in {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(dumps(result), end="")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
