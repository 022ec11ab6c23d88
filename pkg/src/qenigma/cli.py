"""Reproducible experiment runner.

Configuration is a flat ``key=value`` document, one pair per line, with ``#``
comments. On the command line the subcommand names the experiment. Flags
mirror the config keys (``--n-modes 16`` or ``--n_modes 16``), and
``--config FILE`` loads a file that flags then override.

Outputs are a CSV file and a ``<stem>.summary.txt`` file. Both begin with the
resolved configuration and the library version. The CSV holds ``#`` comment
lines, one header row, then unquoted rows. Exit status is 0 on success,
2 on a configuration error and 3 on a runtime error.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .channels import ChannelParams
from .core import QEnigmaError, RngStream
from .locking import generate_haar_ensemble, load_ensemble, mub_qubit_ensemble, save_ensemble
from .protocol import (
    RECORD_FIELDS,
    ExperimentConfig,
    run_depolarizing_block,
    run_key_distribution,
    run_resend_protocol,
)
from .security import KeyRule, OptimizerConfig, accessible_info_oracle, ic_upper_bound, key_length_plan

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

REQUIRED = object()
# where and how a run executes, never what it computes; the CSV
# leaves them out so it stays byte-identical across thread counts
EXECUTION_KEYS = ("workers", "output_path")


class ConfigError(QEnigmaError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


def _optional_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


def _choice(*options):
    def conv(text: str) -> str:
        t = text.strip().lower()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t

    conv.__name__ = "one of " + "/".join(options)
    return conv


_COMMON = {
    "seed": (int, 0),
    "output_path": (str, "results.csv"),
    "workers": (int, 1),
}
_OPTIMIZER = {
    "restarts": (int, 32),
    "max_iter": (int, 2000),
    "tol": (float, 1e-8),
    "method": (_choice("auto", "grid", "ascent"), "auto"),
}
_PROTOCOL = {
    "m_bits": (int, 2),
    "trials": (int, 10000),
    "max_rounds": (int, 64),
    "epsilon_per_use": (float, 0.001),
}

SCHEMAS = {
    "bound": {"n_bits": (int, REQUIRED), "m_bits": (int, REQUIRED),
              "ensemble_in": (str, ""), "ensemble_out": (str, ""), **_OPTIMIZER},
    "oracle": {"n_bits": (int, 1), "m_bits": (int, REQUIRED), "grid_azimuth": (int, 360),
               "grid_polar": (int, 180), "label": (_choice("joint", "message"), "joint"),
               "ensemble_in": (str, ""), "ensemble_out": (str, ""), **_OPTIMIZER},
    "mub_demo": {"n_bits": (int, 1), **_OPTIMIZER},
    "resend": {"n_modes": (int, REQUIRED), "tau": (float, REQUIRED),
               "mean_noise_photons": (float, 0.0), "message": (_optional_int, None), **_PROTOCOL},
    "depolarize_block": {"n_bits": (int, REQUIRED), "eta": (float, REQUIRED),
                         "repetition": (int, 3), **_PROTOCOL},
    "key_distribution": {"n_modes": (int, REQUIRED), "tau": (float, REQUIRED),
                         "mean_noise_photons": (float, 0.0), **_PROTOCOL},
    "key_plan": {"rule": (_choice(*(r.value for r in KeyRule)), REQUIRED), "n_bits": (int, 1),
                 "epsilon": (float, REQUIRED), "b": (int, 1), "constant_factor": (float, 1.0)},
}
EXPERIMENTS = tuple(SCHEMAS)


@dataclass
class RunSpec:
    experiment: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0
    output_path: str = "results.csv"

    def resolved(self) -> dict:
        """Every setting, including defaults, in a stable order."""
        out = {"experiment": self.experiment, "seed": self.seed, "output_path": self.output_path}
        out.update(self.parameters)
        return out


def _schema(experiment: str) -> dict:
    return {**_COMMON, **SCHEMAS[experiment]}


def _convert(experiment: str, key: str, text: str, line: int | None):
    schema = _schema(experiment)
    if key not in schema:
        raise ConfigError(f"unknown key {key!r} for experiment {experiment!r}", line)
    conv = schema[key][0]
    try:
        return conv(text.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text.strip()!r} as {getattr(conv, '__name__', 'value')}",
                          line) from None


def _split_lines(text: str):
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {line!r}", number)
        key, value = line.split("=", 1)
        yield number, key.strip(), value.strip()


def _build_spec(experiment: str, raw: dict) -> RunSpec:
    """``raw`` maps key -> (text, line)."""
    schema = _schema(experiment)
    values = {}
    for key, (text, line) in raw.items():
        values[key] = _convert(experiment, key, text, line)
    for key, (_, default) in schema.items():
        if key not in values:
            if default is REQUIRED:
                raise ConfigError(f"missing required key {key!r} for experiment {experiment!r}")
            values[key] = default
    seed = values.pop("seed")
    output = values.pop("output_path")
    params = {k: values[k] for k in schema if k in values}
    return RunSpec(experiment, params, seed, output)


def _collect(text: str, experiment: str | None = None) -> tuple[str, dict]:
    raw = {}
    exp_line = None
    for number, key, value in _split_lines(text):
        if key == "experiment":
            if experiment is not None and value != experiment:
                raise ConfigError(f"config names experiment {value!r} but {experiment!r} was requested", number)
            experiment, exp_line = value, number
            continue
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", number)
        raw[key] = (value, number)
    if experiment is None:
        raise ConfigError("missing required key 'experiment'")
    if experiment not in SCHEMAS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}", exp_line)
    return experiment, raw


def parse_config(text: str) -> RunSpec:
    """Parse and validate a flat ``key=value`` config, filling in defaults."""
    experiment, raw = _collect(text)
    return _build_spec(experiment, raw)


# ---------------------------------------------------------------------------
# experiment dispatch
# ---------------------------------------------------------------------------

def _optimizer(spec: RunSpec) -> OptimizerConfig:
    p = spec.parameters
    return OptimizerConfig(restarts=p["restarts"], max_iter=p["max_iter"], tol=p["tol"],
                           method=p["method"], seed=spec.seed, workers=p.get("workers", 1))


def _ensemble_for(spec: RunSpec):
    p = spec.parameters
    if p.get("ensemble_in"):
        e = load_ensemble(p["ensemble_in"])
        if (e.n_bits, e.m_bits) != (p["n_bits"], p["m_bits"]):
            raise QEnigmaError("loaded ensemble does not match n_bits/m_bits in the config")
    else:
        e = generate_haar_ensemble(p["n_bits"], p["m_bits"], RngStream(spec.seed).split("ensemble"))
    if p.get("ensemble_out"):
        save_ensemble(e, p["ensemble_out"])
    return e


def _protocol_config(spec: RunSpec) -> ExperimentConfig:
    p = spec.parameters
    channel = ChannelParams(eta=p.get("eta", 1.0), tau=p.get("tau", 1.0),
                            mean_noise_photons=p.get("mean_noise_photons", 0.0))
    return ExperimentConfig(
        n_bits=p.get("n_bits"), n_modes=p.get("n_modes"), m_bits=p["m_bits"], channel=channel,
        trials=p["trials"], max_rounds=p["max_rounds"], epsilon_per_use=p["epsilon_per_use"],
        seed=spec.seed, message=p.get("message"), workers=p["workers"])


def _security_row(report) -> dict:
    return {
        "n_bits": report.n_bits,
        "m_bits": report.m_bits,
        "dim": report.dim,
        "ic_bound": report.ic_bound,
        "probe_value": report.probe_value.value,
        "method": report.method.value,
        "restarts_used": report.restarts_used,
        "converged": report.converged,
    }


@dataclass
class Outcome:
    """Rows for the CSV plus key/value lines for the summary."""

    rows: list
    columns: tuple
    summary: dict


def execute(spec: RunSpec) -> Outcome:
    """Run one experiment and return its rows and summary without writing files."""
    p = spec.parameters
    exp = spec.experiment
    if exp in ("bound", "oracle"):
        e = _ensemble_for(spec)
        report = ic_upper_bound(e, _optimizer(spec))
        row = _security_row(report)
        summary = report.to_record()
        if exp == "oracle":
            value = accessible_info_oracle(e, (p["grid_azimuth"], p["grid_polar"]), p["label"])
            row["oracle_value"] = value
            summary["oracle_value"] = repr(value)
        return Outcome([row], tuple(row), summary)
    if exp == "mub_demo":
        report = ic_upper_bound(mub_qubit_ensemble(p["n_bits"]), _optimizer(spec))
        row = _security_row(report)
        return Outcome([row], tuple(row), report.to_record())
    if exp in ("resend", "key_distribution"):
        cfg = _protocol_config(spec)
        result = run_resend_protocol(cfg) if exp == "resend" else run_key_distribution(cfg)
        rows = [t.record() for t in result.transcripts]
        return Outcome(rows, RECORD_FIELDS, result.summary())
    if exp == "depolarize_block":
        report = run_depolarizing_block(_protocol_config(spec), p["repetition"])
        return Outcome(list(report.records()), RECORD_FIELDS, report.summary())
    if exp == "key_plan":
        plan = key_length_plan(p["rule"], p["n_bits"], p["epsilon"], p["b"], p["constant_factor"])
        row = {"rule": plan.rule.value, "n_bits": plan.n_bits, "epsilon": plan.epsilon, "b": plan.b,
               "constant_factor": plan.constant_factor, "m_recommended": plan.m_recommended}
        return Outcome([row], tuple(row), dict(row))
    raise ConfigError(f"unknown experiment {exp!r}")


def _summary_row(outcome: Outcome) -> dict:
    if len(outcome.rows) == 1 and outcome.columns != RECORD_FIELDS:
        return dict(outcome.rows[0])
    return dict(outcome.summary)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if not math.isfinite(value):
            raise QEnigmaError(f"refusing to write non-finite value {value!r}")
        return repr(value)
    text = str(value)
    if "," in text or "\n" in text:
        raise QEnigmaError(f"value {text!r} cannot be written unquoted")
    return text


def _header_lines(spec: RunSpec, extra: dict | None = None) -> list[str]:
    lines = [f"# qenigma {__version__}"]
    for key, value in spec.resolved().items():
        if key not in EXECUTION_KEYS:
            lines.append(f"# {key}={'none' if value is None else value}")
    for key, value in (extra or {}).items():
        lines.append(f"# {key}={value}")
    return lines


def render_csv(spec: RunSpec, columns, rows, extra: dict | None = None) -> str:
    out = _header_lines(spec, extra)
    out.append(",".join(columns))
    for row in rows:
        out.append(",".join(_fmt(row[c]) for c in columns))
    return "\n".join(out) + "\n"


def render_summary(spec: RunSpec, summary: dict, extra: dict | None = None) -> str:
    lines = [f"qenigma {__version__}", "[config]"]
    for key, value in spec.resolved().items():
        lines.append(f"{key}={'none' if value is None else value}")
    for key, value in (extra or {}).items():
        lines.append(f"{key}={value}")
    lines.append("[result]")
    for key, value in summary.items():
        lines.append(f"{key}={_fmt(value) if not isinstance(value, str) else value}")
    return "\n".join(lines) + "\n"


def summary_path(output_path) -> Path:
    p = Path(output_path)
    return p.with_name(p.stem + ".summary.txt")


def _write(spec: RunSpec, csv_text: str, summary_text: str) -> None:
    out = Path(spec.output_path)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True)
    out.write_text(csv_text)
    summary_path(out).write_text(summary_text)


def run(spec: RunSpec, stream=None) -> int:
    """Run ``spec``, write its CSV and summary, and return the exit status."""
    stream = stream or sys.stdout
    try:
        outcome = execute(spec)
        csv_text = render_csv(spec, outcome.columns, outcome.rows)
        summary_text = render_summary(spec, outcome.summary)
        _write(spec, csv_text, summary_text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QEnigmaError, ValueError, OSError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    stream.write(summary_text)
    return EXIT_OK


def sweep(spec: RunSpec, axis: str, values) -> str:
    """One summary row per value of ``axis``; the seed and all else stay fixed.

    Writes the CSV to ``spec.output_path`` and returns its text.
    """
    schema = _schema(spec.experiment)
    if axis not in spec.parameters or schema[axis][0] not in (int, float):
        raise ConfigError(f"sweep axis {axis!r} is not a numeric parameter of {spec.experiment!r}")
    conv = schema[axis][0]
    try:
        points = [conv(v) for v in values]
    except (TypeError, ValueError):
        raise ConfigError(f"sweep values for {axis!r} must be {conv.__name__}") from None
    if conv is int and any(not isinstance(v, str) and v != int(v) for v in values):
        raise ConfigError(f"sweep values for {axis!r} must be integers")
    if not points:
        raise ConfigError("sweep needs at least one value")
    rows = []
    columns = None
    for value in points:
        point = RunSpec(spec.experiment, {**spec.parameters, axis: value}, spec.seed, spec.output_path)
        row = {axis: value, **{k: v for k, v in _summary_row(execute(point)).items() if k != axis}}
        if columns is None:
            columns = tuple(row)
        rows.append(row)
    extra = {"sweep_axis": axis, "sweep_values": " ".join(str(v) for v in points)}
    csv_text = render_csv(spec, columns, rows, extra)
    summary = {"points": len(rows)}
    _write(spec, csv_text, render_summary(spec, summary, extra))
    return csv_text


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qenigma", description="Quantum enigma machine experiments.")
    parser.add_argument("--version", action="version", version=f"qenigma {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="flat key=value config file")
        sp.add_argument("--out", dest="output_path", help="CSV output path")
        sp.add_argument("--sweep", metavar="AXIS=V1,V2,...", help="sweep one numeric parameter")
        for key in _schema(name):
            if key == "output_path":
                continue
            flags = [f"--{key}"] + ([f"--{key.replace('_', '-')}"] if "_" in key else [])
            sp.add_argument(*flags, dest=key, default=None, metavar="VALUE")
    return parser


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    experiment = args.experiment
    try:
        raw = {}
        if args.config:
            try:
                text = Path(args.config).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
            _, raw = _collect(text, experiment)
        for key in _schema(experiment):
            value = getattr(args, key, None)
            if value is not None:
                raw[key] = (value, None)
        spec = _build_spec(experiment, raw)
        if args.sweep:
            axis, _, vals = args.sweep.partition("=")
            if not vals:
                raise ConfigError("--sweep expects AXIS=V1,V2,...")
            sweep(spec, axis.strip(), [v.strip() for v in vals.split(",") if v.strip()])
            print(f"wrote {spec.output_path}")
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QEnigmaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return run(spec)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
