"""Command-line experiment driver.

Configuration is a flat JSON object whose keys are the fields of
:class:`ExperimentConfig` (for example ``{"divergences": "kl,sl", "steps": 2000}``);
flags given on the command line override values from ``--config``.

Every run writes into ``--out``:

* a CSV body that depends only on the configuration and seed,
* ``records.json`` with one :class:`ResultRecord` per metric,
* ``run.json`` with the config, its hash and the wall-clock time.

Exit codes: 0 success, 1 invalid configuration, 2 failed verification,
3 training failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fdivclass import channels, mixture, nn, toy, verify
from fdivclass.divergences import NAMES, eval_f, eval_f_star, get_spec
from fdivclass.io import config_hash, write_csv, write_json
from fdivclass.objectives import change_of_variable, first_term, second_term
from fdivclass.posterior import posterior_from_d
from fdivclass.training import NetConfig, TrainConfig

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VERIFY = 2
EXIT_TRAINING = 3

COMMANDS = ("verify", "decode-sweep", "toy", "mixture-bench", "divergence-report")
CHANNELS = ("pam4", "pam4-nonuniform", "awgn")
TOY_TASKS = {"exp": "exponential", "gauss": "gaussian", "exponential": "exponential", "gaussian": "gaussian"}
# fields that locate output rather than define the experiment
NON_SEMANTIC = ("out_dir",)


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{k}: {v}" for k, v in self.errors))


@dataclass
class ExperimentConfig:
    command: str
    out_dir: str = "results"
    seed: int = 0
    divergences: str = "sl"
    # architecture and optimiser
    hidden: str = "100,100"
    hidden_activation: str = "leaky_relu"
    dropout: float = 0.0
    optimizer: str = "adam"
    lr: float = 1e-3
    steps: int = 3000
    batch_size: int = 256
    final_lr_frac: float = 0.1
    # decode-sweep
    channel: str = "pam4"
    snr: str = "0:2:16"
    n_symbols: int = 1_000_000
    baselines: str = "map,maxl"
    awgn_dim: int = 6
    prior_p: float = 0.05
    # toy
    task: str = "gauss"
    # mixture-bench
    n_test: int = 100_000
    # verify
    checks: str = ""

    # ------------------------------------------------------------ validation

    def validate(self) -> "ExperimentConfig":
        errors = []
        if self.command not in COMMANDS:
            errors.append(("command", f"unknown command {self.command!r}; expected one of {COMMANDS}"))
        bad = [d for d in self.divergence_list() if d not in NAMES and d != "ce"]
        if bad:
            errors.append(("divergences", f"unknown divergence(s) {bad}; expected names from {NAMES} or 'ce'"))
        try:
            hidden = self.hidden_sizes()
            if not hidden or min(hidden) < 1:
                raise ValueError
        except ValueError:
            errors.append(("hidden", f"expected comma-separated positive widths, got {self.hidden!r}"))
        if self.hidden_activation not in nn.ACTIVATIONS or self.hidden_activation == "softmax":
            errors.append(("hidden_activation", f"unsupported hidden activation {self.hidden_activation!r}"))
        if not 0.0 <= self.dropout < 1.0:
            errors.append(("dropout", "must lie in [0, 1)"))
        if self.optimizer not in ("adam", "sgd", "sgd_momentum"):
            errors.append(("optimizer", f"unknown optimizer {self.optimizer!r}"))
        for name in ("lr", "final_lr_frac"):
            if not getattr(self, name) > 0:
                errors.append((name, "must be positive"))
        for name in ("steps", "batch_size", "n_symbols", "n_test", "awgn_dim"):
            if not getattr(self, name) >= 1:
                errors.append((name, "must be at least 1"))
        if self.channel not in CHANNELS:
            errors.append(("channel", f"unknown channel {self.channel!r}; expected one of {CHANNELS}"))
        try:
            if len(channels.parse_snr_range(self.snr)) == 0:
                raise ValueError
        except ValueError:
            errors.append(("snr", f"expected start:step:stop or a comma list, got {self.snr!r}"))
        bad = [b for b in self.baseline_list() if b not in channels.BASELINES]
        if bad:
            errors.append(("baselines", f"unknown baseline(s) {bad}; expected {sorted(channels.BASELINES)}"))
        if not 0.0 < self.prior_p < 1.0:
            errors.append(("prior_p", "must lie in (0, 1)"))
        if self.task not in TOY_TASKS:
            errors.append(("task", f"unknown toy task {self.task!r}; expected exp or gauss"))
        bad = [c for c in self.check_list() if c not in verify.CHECKS]
        if bad:
            errors.append(("checks", f"unknown check(s) {bad}; expected {sorted(verify.CHECKS)}"))
        out = Path(self.out_dir)
        if out.exists() and not out.is_dir():
            errors.append(("out_dir", f"{self.out_dir!r} exists and is not a directory"))
        if errors:
            raise ConfigError(errors)
        return self

    def divergence_list(self):
        return [d.strip().lower() for d in self.divergences.split(",") if d.strip()]

    def baseline_list(self):
        return [b.strip() for b in self.baselines.split(",") if b.strip()]

    def check_list(self):
        return [c.strip() for c in self.checks.split(",") if c.strip()]

    def hidden_sizes(self):
        return tuple(int(h) for h in self.hidden.split(","))

    def net_config(self) -> NetConfig:
        return NetConfig(self.hidden_sizes(), self.hidden_activation, self.dropout)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.steps, self.batch_size, self.lr, self.optimizer, self.final_lr_frac)

    def semantic(self) -> dict:
        d = dataclasses.asdict(self)
        for k in NON_SEMANTIC:
            d.pop(k)
        return d

    def hash(self) -> str:
        return config_hash(self.semantic())


@dataclass
class ResultRecord:
    experiment_id: str
    config_hash: str
    metric: str
    value: float
    stderr: float | None
    wall_clock: float
    seed: int


@dataclass
class RunOutcome:
    exit_code: int
    records: list = field(default_factory=list)
    lines: list = field(default_factory=list)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, value):
    kind = _FIELDS[name].type
    try:
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
        if isinstance(value, (list, tuple)):
            return ",".join(str(v) for v in value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError([(name, f"cannot interpret {value!r} as {kind}")]) from None


def load_config(command: str, file_values: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Merge file values and flag overrides (flags win) into a validated config."""
    values = {}
    errors = []
    for source in (file_values or {}, overrides or {}):
        for k, v in source.items():
            if v is None:
                continue
            if k not in _FIELDS or k == "command":
                errors.append((k, "unknown configuration key"))
                continue
            try:
                values[k] = _coerce(k, v)
            except ConfigError as exc:
                errors.extend(exc.errors)
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(command=command, **values).validate()


# ---------------------------------------------------------------- commands


def _record(cfg, exp_id, metric, value, stderr, t0):
    return ResultRecord(exp_id, cfg.hash(), metric, float(value),
                        None if stderr is None else float(stderr), time.perf_counter() - t0, cfg.seed)


def run_verify(cfg: ExperimentConfig, exp_id: str, t0: float) -> RunOutcome:
    results = verify.run_suite(cfg.check_list() or None, seed=cfg.seed)
    out = Path(cfg.out_dir)
    write_csv(out / "verify.csv", ("check", "passed", "worst", "tolerance"),
              [(r.name, int(r.passed), r.worst, r.tolerance) for r in results])
    records = [_record(cfg, exp_id, r.name, r.worst, None, t0) for r in results]
    code = EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY
    return RunOutcome(code, records, [r.line() for r in results])


def run_decode_sweep(cfg: ExperimentConfig, exp_id: str, t0: float) -> RunOutcome:
    kwargs = {"d": cfg.awgn_dim} if cfg.channel == "awgn" else {}
    if cfg.channel == "pam4-nonuniform":
        kwargs = {"p": cfg.prior_p}
    model = channels.make_channel(cfg.channel, **kwargs)
    decoders = {b: channels.BASELINES[b] for b in cfg.baseline_list()}
    for name in cfg.divergence_list():
        spec = None if name == "ce" else get_spec(name)
        decoders[name] = channels.neural_decoder(spec, cfg.net_config(), cfg.train_config(), cfg.seed)
    curve = channels.snr_sweep(model, decoders, channels.parse_snr_range(cfg.snr), cfg.n_symbols, cfg.seed)
    write_csv(Path(cfg.out_dir) / "decode_sweep.csv", channels.CSV_HEADER, curve.rows())
    records, lines = [], []
    for snr, name, ser, se, _, _ in curve.rows():
        records.append(_record(cfg, exp_id, f"ser/{name}/{snr:g}dB", ser, se, t0))
        lines.append(f"{snr:6.1f} dB  {name:12s} SER={ser:.5f} +/- {2 * se:.5f}")
    return RunOutcome(EXIT_OK, records, lines)


def run_toy(cfg: ExperimentConfig, exp_id: str, t0: float) -> RunOutcome:
    task = toy.ToyTaskConfig(kind=TOY_TASKS[cfg.task], seed=cfg.seed)
    records, lines, summary = [], [], {}
    for name in cfg.divergence_list():
        if name == "ce":
            raise ConfigError([("divergences", "the toy task needs an f-divergence, not 'ce'")])
        grid = toy.fit_and_grid(task, toy.toy_spec(name, task), cfg.net_config(), cfg.train_config())
        write_csv(Path(cfg.out_dir) / f"toy_{task.kind}_{name}.csv", toy.CSV_HEADER, grid.rows())
        summary[name] = grid.mse
        records.append(_record(cfg, exp_id, f"mse/{task.kind}/{name}", grid.mse, None, t0))
        lines.append(f"{task.kind} {name}: grid MSE {grid.mse:.5f}")
    write_json(Path(cfg.out_dir) / f"toy_{task.kind}_summary.json", {"task": task.kind, "mse": summary})
    return RunOutcome(EXIT_OK, records, lines)


def run_mixture(cfg: ExperimentConfig, exp_id: str, t0: float) -> RunOutcome:
    res = mixture.mixture_bench(cfg.divergence_list(), n_test=cfg.n_test, seed=cfg.seed,
                                net_cfg=cfg.net_config(), train_cfg=cfg.train_config())
    rows = list(res.rows())
    write_csv(Path(cfg.out_dir) / "mixture.csv", mixture.CSV_HEADER, rows)
    records = [_record(cfg, exp_id, f"accuracy/{r[0]}", r[1], r[2], t0) for r in rows]
    lines = [f"{r[0]:6s} accuracy {r[1]:.4f} +/- {2 * r[2]:.4f}" for r in rows]
    return RunOutcome(EXIT_OK, records, lines)


def divergence_report_rows(names, n: int = 25):
    """Per divergence: ``D``, ``T = r(D)``, ``f*(T)``, the two score terms, the posterior and ``f(D)``."""
    for name in names:
        spec = get_spec(name)
        if spec.domain_D.high == 1.0:
            ds = np.linspace(0.02, 0.98, n)
        else:
            ds = np.geomspace(0.02, 20.0, n)
        for d in ds:
            t = float(change_of_variable(name, d))
            yield (name, float(d), t, eval_f_star(spec, t, supervised=True),
                   float(first_term(name, d)[0]), float(second_term(name, d)[0]),
                   posterior_from_d(spec, d), eval_f(spec, d, supervised=True))


def run_divergence_report(cfg: ExperimentConfig, exp_id: str, t0: float) -> RunOutcome:
    names = [d for d in cfg.divergence_list() if d != "ce"] or list(NAMES)
    header = ("divergence", "d", "t", "f_star_t", "first_term", "second_term", "posterior", "f_at_d")
    rows = list(divergence_report_rows(names))
    write_csv(Path(cfg.out_dir) / "divergence_report.csv", header, rows)
    return RunOutcome(EXIT_OK, [], [f"{len(rows)} rows for {', '.join(names)}"])


RUNNERS = {
    "verify": run_verify,
    "decode-sweep": run_decode_sweep,
    "toy": run_toy,
    "mixture-bench": run_mixture,
    "divergence-report": run_divergence_report,
}


def run(cfg: ExperimentConfig) -> RunOutcome:
    t0 = time.perf_counter()
    exp_id = f"{cfg.command}-{cfg.hash()[:12]}"
    try:
        outcome = RUNNERS[cfg.command](cfg, exp_id, t0)
    except nn.TrainingError as exc:
        return RunOutcome(EXIT_TRAINING, [], [f"training failed: {exc}"])
    out = Path(cfg.out_dir)
    write_json(out / "records.json", [dataclasses.asdict(r) for r in outcome.records])
    write_json(out / "run.json", {
        "experiment_id": exp_id,
        "config": cfg.semantic(),
        "config_hash": cfg.hash(),
        "exit_code": outcome.exit_code,
        "wall_clock_seconds": time.perf_counter() - t0,
    })
    return outcome


# ------------------------------------------------------------------ argparse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdivclass", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat JSON config file; flags override its values")
        p.add_argument("--out", dest="out_dir", help="output directory")
        p.add_argument("--seed", type=int)

    def training(p):
        p.add_argument("--hidden", help="comma-separated hidden widths")
        p.add_argument("--hidden-activation", dest="hidden_activation")
        p.add_argument("--dropout", type=float)
        p.add_argument("--optimizer")
        p.add_argument("--lr", type=float)
        p.add_argument("--steps", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--final-lr-frac", dest="final_lr_frac", type=float)

    p = sub.add_parser("verify", help="run the numerical certification suite")
    common(p)
    p.add_argument("--checks", help=f"comma list from {sorted(verify.CHECKS)}; default all")

    p = sub.add_parser("decode-sweep", help="SER versus SNR for baselines and trained decoders")
    common(p)
    training(p)
    p.add_argument("--channel", choices=CHANNELS)
    p.add_argument("--divergences", help="comma list of divergences, or 'ce'")
    p.add_argument("--snr", help="start:step:stop in dB, or a comma list")
    p.add_argument("--n", dest="n_symbols", type=int, help="test symbols per SNR point")
    p.add_argument("--baselines", help="comma list from map, maxl, maxl-linear")
    p.add_argument("--awgn-dim", dest="awgn_dim", type=int)
    p.add_argument("--prior-p", dest="prior_p", type=float)

    p = sub.add_parser("toy", help="continuous posterior toy with closed-form oracle")
    common(p)
    training(p)
    p.add_argument("--task", choices=sorted(TOY_TASKS))
    p.add_argument("--divergence", dest="divergences", help="divergence name (comma list allowed)")

    p = sub.add_parser("mixture-bench", help="3-class Gaussian mixture versus the Bayes classifier")
    common(p)
    training(p)
    p.add_argument("--divergences")
    p.add_argument("--n-test", dest="n_test", type=int)

    p = sub.add_parser("divergence-report", help="tabulate objective terms per divergence")
    common(p)
    p.add_argument("--divergences")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    values = vars(args)
    command = values.pop("command")
    config_path = values.pop("config")
    try:
        file_values = {}
        if config_path:
            try:
                with open(config_path, encoding="utf-8") as fh:
                    file_values = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError([("config", f"cannot read {config_path!r}: {exc}")]) from None
            if not isinstance(file_values, dict):
                raise ConfigError([("config", "top level must be a JSON object")])
        cfg = load_config(command, file_values, values)
        outcome = run(cfg)
    except ConfigError as exc:
        for k, msg in exc.errors:
            print(f"config error: {k}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    for line in outcome.lines:
        print(line)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
