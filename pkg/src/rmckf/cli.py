"""Command-line entry point: ``bench run`` and ``bench describe``."""

from __future__ import annotations

import argparse
import sys

from .bench import FILTER_NAMES, PROBLEMS, builtin_problem, describe_problem, run_experiment, write_report


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text, key):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip() != "")
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {text!r}") from None


def _number(cast, key):
    def parse(text):
        try:
            return cast(text)
        except ValueError:
            raise ConfigError(f"{key}: expected {cast.__name__}, got {text!r}") from None
    return parse


def _bool(text, key):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {text!r}")


def _grid(text, key):
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"{key}: expected lo,hi,count, got {text!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"{key}: expected lo,hi,count, got {text!r}") from None
    if not 0 < lo <= hi or count < 1 or (count > 1 and lo == hi):
        raise ConfigError(f"{key}: need 0 < lo < hi and count >= 1, got {text!r}")
    return (lo, hi, count)


def _filters(text, key):
    names = tuple(v.strip() for v in text.split(",") if v.strip())
    bad = [n for n in names if n not in FILTER_NAMES]
    if bad or not names:
        raise ConfigError(f"{key}: unknown filter(s) {', '.join(bad) or '(none)'}; "
                          f"choose from {','.join(FILTER_NAMES)}")
    return names


# setting name -> parser from text
SETTINGS = {
    "problem": lambda t, k: t.strip(),
    "delta": _floats,
    "runs": lambda t, k: _number(int, k)(t),
    "steps": lambda t, k: _number(int, k)(t),
    "seed": lambda t, k: _number(int, k)(t),
    "filters": _filters,
    "sigma": lambda t, k: _number(float, k)(t),
    "grid": _grid,
    "sigma_c": lambda t, k: _number(float, k)(t),
    "mu1": lambda t, k: _number(float, k)(t),
    "mu2": lambda t, k: _number(float, k)(t),
    "epsilon": lambda t, k: _number(float, k)(t),
    "t_max": lambda t, k: _number(int, k)(t),
    "risk_ceiling": lambda t, k: _number(float, k)(t),
    "include_past_errors": _bool,
    "workers": lambda t, k: _number(int, k)(t),
    "out": lambda t, k: t.strip(),
}
# manifest keys with these prefixes are reports, not settings
IGNORED_PREFIXES = ("result.", "diag.")


def read_config(path) -> dict:
    """Parse a ``key=value`` file; blank lines and ``#`` comments are skipped."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror or err}") from None
    out = {}
    for num, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{path}:{num}: expected key=value")
        if key.startswith(IGNORED_PREFIXES):
            continue
        if key not in SETTINGS:
            raise ConfigError(f"{path}:{num}: unknown key {key!r}")
        out[key] = SETTINGS[key](value.strip(), key)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bench", description="Monte Carlo benchmark of the filter family.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a benchmark and write CSV reports")
    run.add_argument("--config", help="key=value settings file; flags override it")
    run.add_argument("--problem", choices=PROBLEMS)
    run.add_argument("--delta", help="comma-separated uncertainty values")
    run.add_argument("--runs", help="Monte Carlo runs")
    run.add_argument("--steps", help="time steps per run")
    run.add_argument("--seed")
    run.add_argument("--filters", help=f"comma-separated subset of {','.join(FILTER_NAMES)}")
    run.add_argument("--sigma", help="fixed kernel bandwidth for mckf and rmckf-fk")
    run.add_argument("--grid", help="bandwidth search grid lo,hi,count (log spaced)")
    run.add_argument("--sigma-c", dest="sigma_c", help="bandwidth of the selection cost")
    run.add_argument("--mu1")
    run.add_argument("--mu2")
    run.add_argument("--epsilon", help="fixed-point tolerance")
    run.add_argument("--t-max", dest="t_max", help="fixed-point iteration cap")
    run.add_argument("--risk-ceiling", dest="risk_ceiling",
                     help="halve mu1 until 2*mu1*lambda_max(P) is below this")
    run.add_argument("--include-past-errors", dest="include_past_errors")
    run.add_argument("--workers", help="worker processes (output does not depend on it)")
    run.add_argument("--out", help="output directory")

    desc = sub.add_parser("describe", help="print a built-in problem's parameters")
    desc.add_argument("--problem", required=True, choices=PROBLEMS)
    return parser


def resolve_settings(args) -> dict:
    settings = read_config(args.config) if args.config else {}
    for key in SETTINGS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value if key in ("problem", "out") else SETTINGS[key](value, "--" + key.replace("_", "-"))
    if "problem" not in settings:
        raise ConfigError("no problem given (use --problem or problem= in --config)")
    if settings["problem"] not in PROBLEMS:
        raise ConfigError(f"unknown problem {settings['problem']!r}; choose from {', '.join(PROBLEMS)}")
    if "out" not in settings:
        raise ConfigError("no output directory given (use --out)")
    return settings


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "describe":
            print(describe_problem(args.problem))
            return 0
        settings = resolve_settings(args)
        problem = settings.pop("problem")
        out = settings.pop("out")
        workers = settings.pop("workers", 1)
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            exp = builtin_problem(problem, settings)
        except ValueError as err:
            raise ConfigError(str(err)) from None
    except ConfigError as err:
        print(f"bench: error: {err}", file=sys.stderr)
        return 2
    report = run_experiment(exp, workers=workers)
    try:
        paths = write_report(report, out)
    except OSError as err:
        print(f"bench: error: {err}", file=sys.stderr)
        return 1
    for d, name, value, group in report.table:
        print(f"delta={d:g} {name:9s} {group:9s} avg_rmse={value:.4f}")
    print(f"wrote {', '.join(paths.values())}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
