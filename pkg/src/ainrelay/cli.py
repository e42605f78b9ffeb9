"""
Command-line front end.

Subcommands: ``verify`` (certify the constructions), ``sweep`` (MIMO and
2-antenna-relay DoF sweeps), ``scalar`` (single-antenna scheme over a
power grid) and ``report`` (summarize a result file).

Exit codes: 0 success, 1 invariant violation, 2 usage/config error,
3 I/O error.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, fields, replace

import numpy as np

from . import ain_mimo, ain_scalar, dof, link_sim
from .channel import BEAM_STREAM, CHANNEL_STREAM, RunSeed, sample_mimo_channel, sample_scalar_channel
from .errors import AinRelayError, EnumerationTooLargeError

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

SWEEP_COLUMNS = ("row_type", "scenario", "m", "snr_db", "sum_rate_bits", "user1_rate",
                 "user2_rate", "ser1", "ser2", "seed", "slope", "r_squared")
SCALAR_COLUMNS = (
    ("p_db", "q", "d_min")
    + tuple(f"ser{i}_{j}" for i in (1, 2) for j in (1, 2, 3))
    + tuple(f"rate{i}_{j}" for i in (1, 2) for j in (1, 2, 3))
    + ("sum_rate", "dof_estimate")
)
SCHEMAS = {"sweep": "ainrelay-sweep/1", "scalar": "ainrelay-scalar/1"}

SCALAR_CHECK_POWER_DB = 60.0


class ConfigError(ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: tuple = ("ain_relay",)
    m: int = 4
    snr_start: float = 60.0
    snr_stop: float = 100.0
    snr_step: float = 10.0
    n_channels: int = 200
    n_noise: int = 100
    seed: int = 0
    mode: str = "default"
    diversity: bool = False
    gamma: float = 1.0
    epsilon: float = 0.5
    n_symbols: int = 10_000
    budget: int = 10**7
    out: str = ""
    format: str = "csv"

    @property
    def snr_grid(self):
        n = int(round((self.snr_stop - self.snr_start) / self.snr_step))
        return [self.snr_start + k * self.snr_step for k in range(n + 1)]

    def validate(self):
        for name in self.scenario:
            if name not in {s.value for s in dof.Scenario}:
                raise ConfigError("scenario", f"unknown scenario {name!r}")
        if not self.scenario:
            raise ConfigError("scenario", "at least one scenario is required")
        if self.m < 1:
            raise ConfigError("m", "antenna count must be >= 1")
        if self.snr_step <= 0:
            raise ConfigError("snr", "step must be positive")
        if self.snr_stop < self.snr_start:
            raise ConfigError("snr", "stop must not be below start")
        for name in ("n_channels", "n_symbols", "budget"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.n_noise < 0:
            raise ConfigError("n_noise", "must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        if self.mode != "default" and self.mode not in {m.value for m in link_sim.RelayMode}:
            raise ConfigError("mode", f"unknown relay mode {self.mode!r}")
        if self.gamma <= 0:
            raise ConfigError("gamma", "must be positive")
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon", "must lie in (0, 1)")
        if self.format not in ("csv", "json"):
            raise ConfigError("format", "must be csv or json")
        return self

    def to_text(self):
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "scenario":
                value = ",".join(value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: getattr(f.type, "__name__", f.type) for f in fields(ExperimentConfig)}


def _coerce(key, text):
    text = text.strip()
    try:
        if key == "scenario":
            return tuple(s.strip() for s in text.split(",") if s.strip())
        if key == "snr":
            return parse_snr(text)
        kind = _TYPES[key]
        if kind == "bool":
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if kind == "int":
            return int(float(text)) if "e" in text.lower() else int(text)
        if kind == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r}") from None


def parse_snr(text):
    """``start:stop:step`` in dB, inclusive of ``stop``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError("snr", f"expected start:stop:step, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError("snr", f"expected numbers in {text!r}") from None


def _apply(config, values):
    updates = {}
    for key, value in values.items():
        if key == "snr":
            updates.update(snr_start=value[0], snr_stop=value[1], snr_step=value[2])
        elif key in _TYPES:
            updates[key] = value
        else:
            raise ConfigError(key, "unknown configuration key")
    return replace(config, **updates)


def parse_config_text(text, base=None):
    """Parse the flat ``key = value`` format (``#`` starts a comment)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES and key != "snr":
            raise ConfigError(key, "unknown configuration key")
        values[key] = _coerce(key, value)
    return _apply(base or ExperimentConfig(), values)


def _flag_values(args):
    values = {}
    for key in ("seed", "m", "out", "format", "mode", "epsilon", "gamma", "n_channels",
                "n_noise", "n_symbols", "budget"):
        value = getattr(args, key, None)
        if value is not None:
            values[key] = _coerce(key, str(value))
    if getattr(args, "snr", None):
        values["snr"] = parse_snr(args.snr)
    if getattr(args, "scenario", None):
        values["scenario"] = tuple(s for item in args.scenario for s in item.split(",") if s)
    if getattr(args, "diversity", False):
        values["diversity"] = True
    return values


def load_config(args):
    """Config file values overridden by explicit flags, then validated."""
    config = ExperimentConfig()
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            config = parse_config_text(fh.read())
    return _apply(config, _flag_values(args)).validate()


# -- output ------------------------------------------------------------------

def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else f"{float(value):.12g}"
    return str(value)


def _json_value(text):
    if text == "":
        return None
    for cast in (int, float):
        try:
            value = cast(text)
        except ValueError:
            continue
        return None if isinstance(value, float) and math.isnan(value) else value
    return text


def render(rows, columns, fmt, kind):
    """Rows (dicts) as CSV or JSON text; JSON carries the CSV cell values, typed."""
    cells = [[_fmt(row.get(c)) for c in columns] for row in rows]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(cells)
        return buf.getvalue()
    doc = {
        "schema": SCHEMAS[kind],
        "columns": list(columns),
        "rows": [{c: _json_value(v) for c, v in zip(columns, row)} for row in cells],
    }
    return json.dumps(doc, indent=2) + "\n"


class AtomicOutput:
    """Reserve a temp file next to ``path`` up front; rename into place on commit."""

    def __init__(self, path):
        self.path = path
        self._tmp = None
        if path:
            directory = os.path.dirname(os.path.abspath(path))
            fd, self._tmp = tempfile.mkstemp(dir=directory, prefix=".ainrelay-", suffix=".tmp")
            os.close(fd)

    def commit(self, text, stdout):
        if not self.path:
            stdout.write(text)
            return
        with open(self._tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(self._tmp, self.path)
        self._tmp = None

    def discard(self):
        if self._tmp and os.path.exists(self._tmp):
            os.remove(self._tmp)
        self._tmp = None


# -- commands ----------------------------------------------------------------

def _mimo_m(config):
    try:
        ain_mimo.streams_per_part(config.m)
    except ain_mimo.UnsupportedDimensionError:
        raise ConfigError("m", f"M must be a multiple of 4, got {config.m}") from None


def _check(report, name, value, limit, ok):
    status = "pass" if ok else "FAIL"
    report.append((name, value, limit, ok))
    return f"  {name:<42s} {value:10.3e}  {limit:<12s} {status}"


def cmd_verify(config, stdout=sys.stdout, channel_hook=None):
    """
    Certify the MIMO and scalar constructions over ``n_channels`` seeded draws.

    ``channel_hook(index, channel)`` may replace a sampled MIMO channel
    (used by tests to inject a singular channel).
    """
    _mimo_m(config)
    print(f"verify M={config.m} channels={config.n_channels} seed={config.seed}", file=stdout)
    worst = {"alignment": 0.0, "neutral_d1": 0.0, "neutral_d2": 0.0, "e2e": 0.0,
             "sv_relay": math.inf, "sv_d1": math.inf, "sv_d2": math.inf}
    for i in range(config.n_channels):
        ch = sample_mimo_channel(config.m, RunSeed.for_trial(config.seed, CHANNEL_STREAM, i))
        if channel_hook is not None:
            ch = channel_hook(i, ch)
        try:
            beams = ain_mimo.build_beams(ch, RunSeed.for_trial(config.seed, BEAM_STREAM, i),
                                         diversity=config.diversity)
            eff = ain_mimo.compute_effective_channels(ch, beams)
            sv_relay = np.linalg.svd(ain_mimo.relay_stack_matrix(ch, beams), compute_uv=False)[-1]
            sv1, sv2 = eff.min_singular_values()
            e2e = _mimo_roundtrip_error(ch, beams, eff, i, config.seed)
        except AinRelayError as exc:
            print(f"FAIL: construction on channel {i}: {type(exc).__name__}: {exc}", file=stdout)
            return EXIT_VIOLATION
        worst["alignment"] = max(worst["alignment"], ain_mimo.alignment_residual(ch, beams))
        worst["neutral_d1"] = max(worst["neutral_d1"], eff.residual_d1)
        worst["neutral_d2"] = max(worst["neutral_d2"], eff.residual_d2)
        worst["e2e"] = max(worst["e2e"], e2e)
        worst["sv_relay"] = min(worst["sv_relay"], sv_relay)
        worst["sv_d1"] = min(worst["sv_d1"], sv1)
        worst["sv_d2"] = min(worst["sv_d2"], sv2)

    scalar_align, scalar_neutral = 0.0, 0.0
    q = ain_scalar.choose_q(link_sim.snr_to_power(SCALAR_CHECK_POWER_DB), config.gamma, config.epsilon)
    for i in range(config.n_channels):
        sch_ch = sample_scalar_channel(RunSeed.for_trial(config.seed, CHANNEL_STREAM, i))
        sch = ain_scalar.build_scalar_scheme(
            sch_ch, link_sim.snr_to_power(SCALAR_CHECK_POWER_DB), q,
            RunSeed.for_trial(config.seed, BEAM_STREAM, i), config.gamma, config.epsilon)
        for j in (1, 2):
            lhs, rhs = sch_ch.h_r1 * sch.v1[j], sch_ch.h_r2 * sch.v2[j]
            scalar_align = max(scalar_align, abs(lhs - rhs) / abs(lhs))
        scalar_neutral = max(scalar_neutral, float(ain_scalar.cross_link_residuals(sch_ch, sch).max()))

    report = []
    lines = [
        _check(report, "MIMO alignment residual (max, relative)", worst["alignment"], "<= 1e-10",
               worst["alignment"] <= ain_mimo.RESIDUAL_TOL),
        _check(report, "MIMO neutralization residual d1 (max)", worst["neutral_d1"], "<= 1e-10",
               worst["neutral_d1"] <= ain_mimo.RESIDUAL_TOL),
        _check(report, "MIMO neutralization residual d2 (max)", worst["neutral_d2"], "<= 1e-10",
               worst["neutral_d2"] <= ain_mimo.RESIDUAL_TOL),
        _check(report, "MIMO relay stack min singular value", worst["sv_relay"], "> 1e-8",
               worst["sv_relay"] > ain_mimo.MIN_SINGULAR_VALUE),
        _check(report, "MIMO destination 1 min singular value", worst["sv_d1"], "> 1e-8",
               worst["sv_d1"] > ain_mimo.MIN_SINGULAR_VALUE),
        _check(report, "MIMO destination 2 min singular value", worst["sv_d2"], "> 1e-8",
               worst["sv_d2"] > ain_mimo.MIN_SINGULAR_VALUE),
        _check(report, "MIMO noise-free round trip error (max)", worst["e2e"], "<= 1e-9",
               worst["e2e"] <= 1e-9),
        _check(report, "scalar alignment residual (max, relative)", scalar_align, "<= 1e-12",
               scalar_align <= 1e-12),
        _check(report, "scalar neutralization residual (max)", scalar_neutral, "<= 1e-12",
               scalar_neutral <= 1e-12),
    ]
    print("\n".join(lines), file=stdout)
    failed = [name for name, _, _, ok in report if not ok]
    if failed:
        print(f"FAIL: {failed[0]}", file=stdout)
        return EXIT_VIOLATION
    max_res = max(worst["alignment"], worst["neutral_d1"], worst["neutral_d2"])
    print(f"max residual {max_res:.1e}, pass", file=stdout)
    return EXIT_OK


def _mimo_roundtrip_error(ch, beams, eff, index, seed):
    rng = RunSeed.for_trial(seed, BEAM_STREAM, index).rng()
    r = beams.r
    s1 = link_sim.qpsk(rng, (3 * r, 4))
    s2 = link_sim.qpsk(rng, (3 * r, 4))
    out = link_sim.simulate_mimo_link(ch, beams, s1, s2, "genie", effective=eff)
    truth1 = np.vstack([s1, s2[2 * r:]])
    truth2 = np.vstack([s2, s1[r:2 * r]])
    return float(max(np.max(np.abs(out.d1 - truth1)), np.max(np.abs(out.d2 - truth2))))


def sweep_rows(config):
    mode = "genie" if config.mode == "default" else config.mode
    rows = []
    for name in config.scenario:
        if name == dof.Scenario.AIN_RELAY.value:
            _mimo_m(config)
        est = dof.sweep(name, config.m, config.snr_grid, config.n_channels, config.n_noise,
                        config.seed, mode=mode, diversity=config.diversity)
        m = 1 if est.scenario is dof.Scenario.TWO_ANTENNA_RELAY else config.m
        for pt in est.points:
            rows.append({"row_type": "data", "scenario": name, "m": m, "snr_db": pt.snr_db,
                         "sum_rate_bits": pt.sum_rate, "user1_rate": pt.user1_rate,
                         "user2_rate": pt.user2_rate, "ser1": pt.ser1, "ser2": pt.ser2,
                         "seed": config.seed})
        rows.append({"row_type": "summary", "scenario": name, "m": m, "seed": config.seed,
                     "slope": est.slope, "r_squared": est.r_squared})
    return rows


def scalar_rows(config):
    mode = "hard_decision" if config.mode == "default" else config.mode
    if mode == "zf_forward":
        raise ConfigError("mode", "the scalar scheme supports genie and hard_decision relaying")
    points = dof.scalar_sweep(config.snr_grid, config.gamma, config.epsilon, config.n_symbols,
                              config.seed, mode=mode, budget=config.budget)
    rows = []
    for pt in points:
        row = {"p_db": pt.p_db, "q": pt.q, "d_min": pt.d_min, "sum_rate": pt.sum_rate,
               "dof_estimate": pt.dof}
        row.update(zip(SCALAR_COLUMNS[3:9], pt.ser))
        row.update(zip(SCALAR_COLUMNS[9:15], pt.rates))
        rows.append(row)
    return rows


def _run_to_file(config, build, columns, kind, stdout):
    try:
        sink = AtomicOutput(config.out)
    except OSError as exc:
        print(f"error: cannot write {config.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        rows = build(config)
        sink.commit(render(rows, columns, config.format, kind), stdout)
    except OSError as exc:
        print(f"error: cannot write {config.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    finally:
        sink.discard()
    return EXIT_OK


def cmd_sweep(config, stdout=sys.stdout):
    if dof.Scenario.AIN_RELAY.value in config.scenario:
        _mimo_m(config)
    dof.validate_grid(config.snr_grid)
    return _run_to_file(config, sweep_rows, SWEEP_COLUMNS, "sweep", stdout)


def cmd_scalar(config, stdout=sys.stdout):
    return _run_to_file(config, scalar_rows, SCALAR_COLUMNS, "scalar", stdout)


def read_result_file(path):
    """Rows (dicts of strings or typed values) and the kind of a result file."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        kind = {v: k for k, v in SCHEMAS.items()}.get(doc.get("schema"))
        return kind, doc["rows"]
    rows = list(csv.DictReader(io.StringIO(text)))
    kind = "sweep" if rows and "row_type" in rows[0] else "scalar"
    return kind, rows


def cmd_report(path, stdout=sys.stdout):
    kind, rows = read_result_file(path)
    if kind == "sweep":
        print(f"{'scenario':<20s} {'m':>3s} {'points':>6s} {'slope':>8s} {'r^2':>9s}", file=stdout)
        for row in rows:
            if row["row_type"] != "summary":
                continue
            n = sum(1 for r in rows if r["row_type"] == "data" and r["scenario"] == row["scenario"])
            print(f"{row['scenario']:<20s} {int(row['m']):>3d} {n:>6d} "
                  f"{float(row['slope']):>8.3f} {float(row['r_squared']):>9.6f}", file=stdout)
    elif kind == "scalar":
        print(f"{'p_db':>6s} {'q':>3s} {'d_min':>10s} {'max ser':>8s} {'sum rate':>9s} {'dof':>6s}",
              file=stdout)
        for row in rows:
            max_ser = max(float(row[c]) for c in SCALAR_COLUMNS[3:9])
            print(f"{float(row['p_db']):>6.1f} {int(row['q']):>3d} {float(row['d_min']):>10.4g} "
                  f"{max_ser:>8.4f} {float(row['sum_rate']):>9.3f} {float(row['dof_estimate']):>6.3f}",
                  file=stdout)
    else:
        raise ValueError("unrecognized result file")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--m", type=int, help="antennas per node (multiple of 4 for ain_relay)")
    common.add_argument("--snr", help="grid start:stop:step in dB (inclusive)")
    common.add_argument("--scenario", action="append",
                        help="ain_relay, no_relay_zf, tdma, two_antenna_relay; repeat or comma-separate")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--mode", choices=[m.value for m in link_sim.RelayMode])
    common.add_argument("--epsilon", type=float)
    common.add_argument("--gamma", type=float)
    common.add_argument("--n-channels", dest="n_channels", type=int)
    common.add_argument("--n-noise", dest="n_noise", type=int)
    common.add_argument("--n-symbols", dest="n_symbols", type=int)
    common.add_argument("--budget", type=int, help="constellation enumeration budget (tuples)")
    common.add_argument("--diversity", action="store_true",
                        help="use the diversity-optimized part-1 beams")

    parser = argparse.ArgumentParser(
        prog="ainrelay",
        description="Aligned interference neutralization with an instantaneous relay.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    verify = sub.add_parser("verify", parents=[common], help="certify alignment and neutralization")
    verify.add_argument("--inject-singular", action="store_true", help=argparse.SUPPRESS)
    sub.add_parser("sweep", parents=[common], help="DoF sweep over an SNR grid")
    sub.add_parser("scalar", parents=[common], help="single-antenna scheme over a power grid")
    report = sub.add_parser("report", help="summarize a sweep or scalar result file")
    report.add_argument("path")
    return parser


def _singular_hook(index, ch):
    if index == 0:
        return ch.with_links(h_1r=np.zeros_like(ch.h_1r))
    return ch


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    if args.command == "report":
        try:
            return cmd_report(args.path, stdout)
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: cannot read {args.path}: {exc}", file=sys.stderr)
            return EXIT_IO
    try:
        config = load_config(args)
        if args.command == "verify":
            hook = _singular_hook if args.inject_singular else None
            return cmd_verify(config, stdout, channel_hook=hook)
        if args.command == "sweep":
            return cmd_sweep(config, stdout)
        return cmd_scalar(config, stdout)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EnumerationTooLargeError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
