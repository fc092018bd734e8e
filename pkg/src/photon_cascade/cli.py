"""Command-line entry point.

Usage:
    photon-cascade coeffs --theta pi --n-max 4
    photon-cascade filter --input coherent:2.25 --stages 8 --theta pi --format csv
    photon-cascade detect --input fock:2 --stages 4 --format json --out detect.json
    photon-cascade tune --n 2
    photon-cascade oracle-check --truncation 4

Settings can also come from a flat ``key = value`` file passed with
``--config``; command-line flags override the file.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from . import analysis, cascade, oracle
from .dynamics import MediumParams, StageGeometry, transfer_amplitudes
from .fock_sector import InputSpec, TruncationError

EXPERIMENTS = ("coeffs", "filter", "detect", "tune", "oracle-check")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_TOLERANCE = 2
EXIT_IO = 3


class ConfigError(ValueError):
    pass


def fmt(x: float) -> str:
    return f"{x:.12g}"


def rounded(x: float) -> float:
    return float(fmt(x))


_PI_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)?\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


def parse_theta(text: str) -> float:
    """Accepts plain numbers and multiples of pi: ``3.14``, ``pi``, ``2pi``, ``2*pi``, ``pi/2``."""
    text = str(text).strip().lower()
    m = _PI_RE.match(text)
    if m:
        coeff = float(m.group(1)) if m.group(1) else 1.0
        denom = float(m.group(2)) if m.group(2) else 1.0
        value = coeff * math.pi / denom
    else:
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(f"cannot parse stage phase {text!r}") from None
    if not value >= 0:
        raise ConfigError(f"stage phase must be >= 0, got {text!r}")
    return value


@dataclass
class ExperimentConfig:
    experiment: str
    input: str = "fock:2"
    stages: int = 4
    theta: list = field(default_factory=lambda: ["pi"])
    truncation: Optional[int] = None
    efficiency: float = 1.0
    number_resolving: bool = False
    drive_phase: float = 0.0
    seed: int = 0
    trials: int = 0
    n_max: int = 4
    n: int = 1
    tolerance: float = 1e-10
    output_format: str = "csv"
    output_path: Optional[str] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.output_format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.output_format!r}")
        if self.stages < 1:
            raise ConfigError(f"stages must be >= 1, got {self.stages}")
        if not self.theta:
            raise ConfigError("need at least one stage phase")
        if len(self.theta) not in (1, self.stages):
            raise ConfigError(f"got {len(self.theta)} stage phases for {self.stages} stages; give 1 or {self.stages}")
        self.thetas()
        if not 0 < self.efficiency <= 1:
            raise ConfigError(f"efficiency must be in (0, 1], got {self.efficiency}")
        if self.trials < 0:
            raise ConfigError(f"trials must be >= 0, got {self.trials}")
        if self.n_max < 0 or self.n < 1:
            raise ConfigError("n-max must be >= 0 and n must be >= 1")
        if self.truncation is not None and self.truncation < 0:
            raise ConfigError(f"truncation must be >= 0, got {self.truncation}")
        self.input_spec()

    def thetas(self) -> list[float]:
        return [parse_theta(t) for t in self.theta]

    def geometries(self) -> list[StageGeometry]:
        values = self.thetas()
        if len(values) == 1:
            values = values * self.stages
        return [StageGeometry(t) for t in values]

    def input_spec(self) -> InputSpec:
        try:
            return InputSpec.parse(self.input, truncation=self.truncation)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def detector(self) -> cascade.DetectorModel:
        return cascade.DetectorModel(self.efficiency, self.number_resolving)

    def medium(self) -> MediumParams:
        return MediumParams(drive_phase=self.drive_phase)

    def to_dict(self) -> dict:
        """Settings that determine the result; the output location is left out."""
        d = asdict(self)
        d["theta"] = [str(t) for t in self.theta]
        del d["output_path"]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)


# config-file key -> (dataclass field, converter)
_CONFIG_KEYS = {
    "experiment": ("experiment", str),
    "input": ("input", str),
    "stages": ("stages", int),
    "theta": ("theta", lambda v: [t.strip() for t in v.split(",") if t.strip()]),
    "truncation": ("truncation", int),
    "efficiency": ("efficiency", float),
    "number_resolving": ("number_resolving", lambda v: v.strip().lower() in ("1", "true", "yes", "on")),
    "drive_phase": ("drive_phase", float),
    "seed": ("seed", int),
    "trials": ("trials", int),
    "n_max": ("n_max", int),
    "n": ("n", int),
    "tolerance": ("tolerance", float),
    "format": ("output_format", str),
    "out": ("output_path", str),
}


def read_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Dashes in keys are allowed."""
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key = key.strip().replace("-", "_")
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            name, conv = _CONFIG_KEYS[key]
            try:
                values[name] = conv(value.strip())
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value.strip()!r}") from None
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value settings file (flags override it)")
    common.add_argument("--input", help="fock:N or coherent:MEAN")
    common.add_argument("--stages", type=int)
    common.add_argument("--theta", action="append",
                        help="stage phase kappa|Omega2|L, e.g. pi or 2pi; repeat once per stage")
    common.add_argument("--truncation", type=int, help="photon-number cutoff (coherent input, oracle)")
    common.add_argument("--efficiency", type=float, help="detector efficiency per photon")
    common.add_argument("--number-resolving", action="store_const", const=True, default=None)
    common.add_argument("--drive-phase", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int, help="Monte Carlo trials for detect (0 = exact only)")
    common.add_argument("--format", dest="output_format", choices=("csv", "json"))
    common.add_argument("--out", dest="output_path", help="output file (default stdout)")

    parser = argparse.ArgumentParser(prog="photon-cascade",
                                     description="Few-photon four-wave-mixing cascade simulator")
    sub = parser.add_subparsers(dest="experiment", required=True)
    p = sub.add_parser("coeffs", parents=[common], help="transfer amplitudes xi_j^(n) for one stage")
    p.add_argument("--n-max", type=int)
    sub.add_parser("filter", parents=[common], help="photon-number distribution per stage")
    sub.add_parser("detect", parents=[common], help="detector record statistics")
    p = sub.add_parser("tune", parents=[common], help="stage length for full return of an n-photon state")
    p.add_argument("--n", type=int)
    p.add_argument("--tolerance", type=float)
    sub.add_parser("oracle-check", parents=[common], help="compare against the full Fock-space reference")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    for f in fields(ExperimentConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    values["experiment"] = args.experiment
    return ExperimentConfig(**values)


# Each experiment returns (columns, rows, extra) where extra is JSON-only detail.

def cmd_coeffs(cfg: ExperimentConfig):
    theta = cfg.thetas()[0]
    rows = []
    for n in range(cfg.n_max + 1):
        for j, xi in enumerate(transfer_amplitudes(n, theta, cfg.drive_phase)):
            rows.append([theta, n, j, abs(xi), math.atan2(xi.imag, xi.real) if abs(xi) > 1e-14 else 0.0])
    return ["theta", "n", "j", "abs_xi", "arg_xi"], rows, {}


def cmd_filter(cfg: ExperimentConfig):
    result = cascade.run_cascade(cfg.input_spec(), cfg.stages, cfg.geometries(), cfg.detector(),
                                 cfg.medium(), track_records=False)
    n_max = max(d.n_max for d in result.history)
    columns = ["stage"] + [f"p{n}" for n in range(n_max + 1)] + ["p_ge2"]
    rows = []
    for m, dist in zip(analysis.filter_metrics(result.history), result.history):
        rows.append([m.stage] + [dist[n] for n in range(n_max + 1)] + [m.p_ge2])
    return columns, rows, {"stages_to_p_ge2_below_0.01": analysis.stages_to_purity(result.history)}


def cmd_detect(cfg: ExperimentConfig):
    inp = cfg.input_spec()
    result = cascade.run_cascade(inp, cfg.stages, cfg.geometries(), cfg.detector(), cfg.medium())
    summary = {
        "p_only_dinf": result.p_only_final(),
        "p_no_detector": result.p_silent(),
        "p_any_stage_detector": 1.0 - result.p_no_stage_click(),
    }
    if inp.kind == "fock" and inp.n >= 2:
        summary["discrimination_accuracy"] = 1.0 - result.p_only_final()
    if cfg.trials:
        sampled = cascade.sample_cascade(inp, cfg.stages, cfg.geometries(), cfg.detector(), cfg.medium(),
                                         trials=cfg.trials, seed=cfg.seed)
        summary["sampled_p_only_dinf"] = sampled.frequency(lambda r: not r.any_stage_click and bool(r.final_count))
    rows = [["record", rec.label(), "".join(str(c) for c in rec.stage_counts), rec.final_count, p]
            for rec, p in result.record_distribution().items()]
    rows += [["summary", k, "", "", v] for k, v in summary.items()]
    return ["kind", "label", "stage_counts", "final_count", "probability"], rows, {}


def cmd_tune(cfg: ExperimentConfig):
    r = analysis.tune_length_for_sector(cfg.n, cfg.tolerance)
    row = [r.n, r.theta, r.cycles, r.return_probability, r.exact]
    return ["n", "theta", "cycles", "return_probability", "exact"], [row], {}


def cmd_oracle_check(cfg: ExperimentConfig):
    truncation = cfg.truncation if cfg.truncation is not None else 4
    checks = oracle.run_oracle_checks(truncation, seed=cfg.seed, drive_phase=cfg.drive_phase)
    rows = [[c.name, c.value, c.tolerance, c.passed] for c in checks]
    return ["check", "max_deviation", "tolerance", "passed"], rows, {"all_passed": all(c.passed for c in checks)}


COMMANDS = {
    "coeffs": cmd_coeffs,
    "filter": cmd_filter,
    "detect": cmd_detect,
    "tune": cmd_tune,
    "oracle-check": cmd_oracle_check,
}


def _cell(v):
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, float):
        return fmt(v)
    return str(v)


def _json_value(v):
    if isinstance(v, float):
        return rounded(v)
    return v


def render(cfg: ExperimentConfig, columns, rows, extra) -> str:
    if cfg.output_format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows([[_cell(v) for v in row] for row in rows])
        return buf.getvalue()
    doc = {
        "config": cfg.to_dict(),
        "columns": columns,
        "rows": [[_json_value(v) for v in row] for row in rows],
        "extra": {k: _json_value(v) for k, v in extra.items()},
    }
    return json.dumps(doc, indent=2) + "\n"


def run(cfg: ExperimentConfig) -> tuple[str, int]:
    columns, rows, extra = COMMANDS[cfg.experiment](cfg)
    status = EXIT_OK
    if cfg.experiment == "oracle-check" and not extra["all_passed"]:
        status = EXIT_TOLERANCE
    return render(cfg, columns, rows, extra), status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        text, status = run(cfg)
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except oracle.IntegrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except (ConfigError, TruncationError, ValueError, cascade.BranchOverflowError, oracle.OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    if cfg.output_path:
        try:
            with open(cfg.output_path, "w", newline="") as f:
                f.write(text)
        except OSError as exc:
            print(f"error: cannot write {cfg.output_path}: {exc.strerror or exc}", file=sys.stderr)
            return EXIT_IO
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
