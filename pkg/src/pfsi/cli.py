"""Command-line entry point: ``pfsi --config run.cfg [--override key=value ...]``."""
import argparse
import os
import sys

from .config import SCENARIOS, parse_config
from .errors import ConfigError
from .scenarios import DESCRIPTIONS, EXIT_CONFIG, run


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # exit code 2 is reserved for a tube breach
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="pfsi", description="Polymeric fluid-structure interaction simulator.")
    p.add_argument("--config", metavar="PATH", help="plain-text run configuration")
    p.add_argument("--output", metavar="DIR", help="output directory (overrides output.directory)")
    p.add_argument("--override", metavar="KEY=VALUE", action="append", default=[],
                   help="override one configuration key, e.g. time.dt=0.005 (repeatable)")
    p.add_argument("--list-scenarios", action="store_true", help="list built-in scenarios and exit")
    p.add_argument("--quiet", action="store_true", help="suppress progress messages")
    return p


def _limit_threads():
    value = os.environ.get("PFSI_THREADS")
    if not value:
        return None
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"PFSI_THREADS must be an integer, got {value!r}") from None
    if n < 1:
        raise ConfigError("PFSI_THREADS must be at least 1")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.list_scenarios:
        for name in SCENARIOS:
            print(f"{name:20s} {DESCRIPTIONS[name]}")
        return 0
    if not args.config:
        build_parser().error("--config is required")
    log = (lambda *a, **k: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"pfsi: cannot read config {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    overrides = list(args.override)
    if args.output:
        overrides.append(f"output.directory={args.output}")
    try:
        cfg = parse_config(text, overrides)
        limiter = _limit_threads()
    except ConfigError as exc:
        print(f"pfsi: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, summary = run(cfg, log=log)
    except OSError as exc:
        print(f"pfsi: I/O error on {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        if limiter is not None:
            limiter.restore_original_limits()
    log(f"{cfg.scenario}: {summary.get('status')} (exit {code}); outputs in {cfg.output.directory}")
    return code


if __name__ == "__main__":
    sys.exit(main())
