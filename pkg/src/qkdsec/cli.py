"""Command-line front end.

Exit status: 0 on success, 1 when a verification suite fails, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import protocol, quantum, rates, suites
from .errors import QKDError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SWEEP_COLUMNS = ("delta0", "delta1", "Delta", "method", "f", "cost_ec", "cost_pa",
                 "gain_per_bit", "feasible")


class ConfigError(Exception):
    pass


def fmt(x: float) -> str:
    return f"{x:.9g}"


def _round(obj):
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return None
        return float(fmt(obj))
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def dump_json(obj) -> str:
    return json.dumps(_round(obj), indent=2, sort_keys=True)


@dataclass(frozen=True)
class Grid:
    lo: float
    hi: float
    step: float

    @classmethod
    def parse(cls, text: str) -> "Grid":
        parts = text.split(":")
        try:
            if len(parts) == 1:
                v = float(parts[0])
                return cls(v, v, 1.0)
            if len(parts) == 3:
                lo, hi, step = map(float, parts)
                return cls(lo, hi, step)
        except ValueError:
            pass
        raise argparse.ArgumentTypeError(f"expected a number or min:max:step, got {text!r}")

    def __post_init__(self):
        if self.lo > self.hi or self.step <= 0:
            raise argparse.ArgumentTypeError("grid needs min <= max and step > 0")

    def values(self) -> list[float]:
        count = int(math.floor((self.hi - self.lo) / self.step + 1e-9)) + 1
        return [round(self.lo + i * self.step, 12) for i in range(count)]


@dataclass(frozen=True)
class SweepSpec:
    delta0: Grid
    delta1: Grid
    Delta: Grid
    method: str
    out: Optional[str] = None


def sweep_rows(spec: SweepSpec) -> list[dict]:
    rows = []
    for d0 in spec.delta0.values():
        for d1 in spec.delta1.values():
            for D in spec.Delta.values():
                res = rates.key_gain_basis_dependent(d0, d1, D, spec.method)
                rows.append({"delta0": d0, "delta1": d1, "Delta": D, "method": spec.method,
                             "f": res.f_value, "cost_ec": res.cost_ec, "cost_pa": res.cost_pa,
                             "gain_per_bit": res.gain_per_bit, "feasible": res.feasible})
    return rows


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow([
            fmt(v) if isinstance(v, float) else ("true" if v else "false") if isinstance(v, bool) else v
            for v in (row[c] for c in SWEEP_COLUMNS)
        ])
    return buf.getvalue()


def _emit(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc}") from None


def cmd_rate_sweep(args) -> int:
    spec = SweepSpec(args.delta0, args.delta1, args.Delta, args.method, args.out)
    for g in (spec.delta0, spec.delta1):
        if g.lo < 0 or g.hi > 1:
            raise ConfigError("error rates must lie in [0, 1]")
    if spec.Delta.lo < 0 or spec.Delta.hi > 0.5:
        raise ConfigError("Delta must lie in [0, 1/2]")
    _emit(sweep_csv(sweep_rows(spec)), spec.out)
    return EXIT_OK


def cmd_threshold(args) -> int:
    d = rates.positive_gain_threshold(args.method, args.delta0, args.delta1)
    doc = {"method": args.method, "delta_star": d, "delta0": args.delta0, "delta1": args.delta1}
    _emit(dump_json(doc) + "\n", args.out)
    return EXIT_OK


def load_json(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def cmd_simulate(args) -> int:
    doc = load_json(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        transcript = protocol.run_from_config(doc)
    except KeyError as exc:
        raise ConfigError(f"config is missing field {exc}") from None
    except (QKDError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    _emit(dump_json(transcript.to_dict()) + "\n", args.out)
    return EXIT_OK


def _load_state(path: str):
    try:
        return quantum.as_density(quantum.state_from_dict(load_json(path)))
    except (KeyError, TypeError, QKDError, ValueError) as exc:
        raise ConfigError(f"bad state file {path}: {exc}") from None


def cmd_verify(args) -> int:
    kwargs = {"seed": args.seed}
    if args.state is not None:
        if args.suite not in ("equivalence", "uncertainty"):
            raise ConfigError("--state applies to the equivalence and uncertainty suites only")
        state = _load_state(args.state)
        if args.suite == "equivalence":
            n = args.qubits if args.qubits is not None else len(state.dims)
            kwargs["extra"] = (state, n)
        else:
            kwargs["extra"] = state
    result = suites.SUITES[args.suite](**kwargs)
    status = "PASS" if result.passed else "FAIL"
    print(f"[{status}] {result.name}", file=sys.stderr)
    for key, value in result.summary.items():
        if not isinstance(value, (list, dict)):
            print(f"  {key}: {fmt(value) if isinstance(value, float) else value}", file=sys.stderr)
    _emit(dump_json(result.to_dict()) + "\n", args.out)
    return EXIT_OK if result.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkdsec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rate-sweep", help="tabulate key gain over a grid of error rates")
    p.add_argument("--delta0", type=Grid.parse, default=Grid(0, 0, 1))
    p.add_argument("--delta1", type=Grid.parse, default=Grid(0, 0, 1))
    p.add_argument("--Delta", type=Grid.parse, default=Grid(0, 0, 1))
    p.add_argument("--method", choices=rates.METHODS, default="m2")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rate_sweep)

    p = sub.add_parser("threshold", help="largest Delta with positive key gain")
    p.add_argument("--method", choices=rates.METHODS, default="m2")
    p.add_argument("--delta0", type=float, default=0.0)
    p.add_argument("--delta1", type=float, default=0.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("simulate", help="run a BB84 session from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run a property suite")
    p.add_argument("suite", choices=sorted(suites.SUITES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--state", default=None, help="extra state fixture (JSON)")
    p.add_argument("--qubits", type=int, default=None,
                   help="number of trailing qubits in --state for the equivalence suite")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
