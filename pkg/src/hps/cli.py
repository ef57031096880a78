"""Command line front end: ``hps solve|convergence|bench``.

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 resource
guard. On failure a single ``<error-code>: <context>`` line goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigError, HPSError, ResourceGuard
from .runner import RunConfig, cmd_bench, cmd_convergence, cmd_solve

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_RESOURCE = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"arguments: {message}")


def _param(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected k=v, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def make_parser():
    parser = _Parser(prog="hps", description="Hierarchical DtN-merge direct solver for 2D elliptic problems.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file mirroring the run configuration")
    common.add_argument("--case")
    common.add_argument("--param", action="append", type=_param, default=None, metavar="K=V",
                        help="case parameter, repeatable")
    common.add_argument("--leaves", nargs=2, type=int, metavar=("NX", "NY"))
    common.add_argument("--q", type=int)
    common.add_argument("--p", type=int)
    common.add_argument("--body", action="store_true", default=None, help="build body-load operators")
    common.add_argument("--memory", choices=["many", "minimal"])
    common.add_argument("--out", help="existing output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--max-memory-gb", dest="max_memory_gb", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("solve", parents=[common], help="solve one problem and dump fields")
    conv = sub.add_parser("convergence", parents=[common], help="error table over several q")
    conv.add_argument("--q-list", dest="q_list", type=int, nargs="+")
    bench = sub.add_parser("bench", parents=[common], help="build/solve timings over tree depths")
    bench.add_argument("--L-list", dest="L_list", type=int, nargs="+")
    bench.add_argument("--repeats", type=int)
    return parser


def config_from_args(args) -> RunConfig:
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
    for name in ("case", "leaves", "q", "p", "body", "memory", "out", "seed", "threads",
                 "max_memory_gb", "q_list", "L_list", "repeats"):
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    if args.param:
        params = dict(data.get("params", {}))
        params.update(dict(args.param))
        data["params"] = params
    return RunConfig.from_dict(data)


def _limit_threads(n):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return None
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        cfg = config_from_args(args)
        _limit_threads(cfg.threads)
        if args.command == "solve":
            res = cmd_solve(cfg)
            r = res.row
            print(f"N={r.N} q={r.q} L={r.L} build={r.build_seconds:.3f}s solve={r.solve_seconds:.3f}s "
                  f"err_gauss={r.max_error_gauss:.3e} err_random={r.max_error_random_points:.3e}")
        elif args.command == "convergence":
            rows = cmd_convergence(cfg)
            for r in rows:
                if r is not None:
                    print(f"q={r.q} N={r.N} err_gauss={r.max_error_gauss:.3e} err_random={r.max_error_random_points:.3e}")
        else:
            summary = cmd_bench(cfg)
            print(json.dumps({k: summary[k] for k in ("build_slope", "solve_slope")}))
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except ResourceGuard as exc:
        return _fail(exc, EXIT_RESOURCE)
    except HPSError as exc:
        return _fail(exc, EXIT_SOLVER)
    return EXIT_OK


def _fail(exc, status):
    print(f"{exc.code}: {' '.join(str(exc).split())}", file=sys.stderr)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
