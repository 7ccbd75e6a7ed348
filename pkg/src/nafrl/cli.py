"""Command-line client for the toolkit.

Runs jobs in-process by default; with --server it sends the same request
models to a running service over HTTP and prints the same output. Exit codes:
0 success (all suites passing for selftest), 1 runtime/numeric failure,
2 usage or configuration error.
"""

import argparse
import sys

from .errors import CheckpointError, ConfigError, ToolkitError
from .service import schemas
from .service.app import handle_defaults, handle_eval, handle_selftest, handle_train

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _post(server: str, path: str, payload: dict, response_model):
    import httpx

    resp = httpx.post(server.rstrip("/") + path, json=payload, timeout=None)
    if resp.status_code == 400 or resp.status_code == 422:
        raise ConfigError(str(resp.json().get("detail", resp.text)))
    if resp.status_code != 200:
        raise ToolkitError(f"server error {resp.status_code}: {resp.text}")
    return response_model.model_validate(resp.json())


def cmd_train(args) -> int:
    config_text = None
    if args.config:
        try:
            with open(args.config) as fh:
                config_text = fh.read()
        except OSError as err:
            print(f"error: cannot read config file: {err}", file=sys.stderr)
            return EXIT_USAGE
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            print(f"error: --set expects key=value, got '{item}'", file=sys.stderr)
            return EXIT_USAGE
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    req = schemas.TrainRequest(
        env=args.env,
        mode=args.mode,
        episodes=args.episodes,
        seed=args.seed,
        out_dir=args.out,
        config_text=config_text,
        overrides=overrides,
    )
    if args.server:
        resp = _post(args.server, "/train", req.model_dump(), schemas.TrainResponse)
    else:
        resp = handle_train(req)
    print(f"episodes_run {resp.episodes_run}")
    print(f"env_steps {resp.env_steps}")
    print(f"final_eval_return {resp.final_eval_return!r}")
    print(f"metrics {resp.metrics_path}")
    print(f"checkpoint {resp.checkpoint_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    req = schemas.EvalRequest(
        checkpoint_path=args.checkpoint, episodes=args.episodes, seed=args.seed
    )
    if args.server:
        resp = _post(args.server, "/eval", req.model_dump(), schemas.EvalResponse)
    else:
        resp = handle_eval(req)
    print(f"mean_return {resp.mean_return!r}")
    print(f"std_return {resp.std_return!r}")
    print(f"episodes {resp.episodes}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    req = schemas.SelftestRequest(suites=args.suite or None)
    if args.server:
        resp = _post(args.server, "/selftest", req.model_dump(), schemas.SelftestResponse)
    else:
        resp = handle_selftest(req)
    for suite in resp.suites:
        mark = "PASS" if suite.passed else "FAIL"
        print(f"[{mark}] {suite.name}: {suite.detail}")
    if not resp.passed:
        failed = ", ".join(s.name for s in resp.suites if not s.passed)
        print(f"selftest failed: {failed}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_print_defaults(args) -> int:
    resp = handle_defaults()
    for key in sorted(resp.defaults):
        print(f"{key}={resp.defaults[key]}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nafrl",
        description="Continuous-action Q-learning toolkit with model-based acceleration",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training job")
    p_train.add_argument("--env", help="environment name")
    p_train.add_argument("--mode", help="algorithm variant")
    p_train.add_argument("--episodes", type=int, help="training episodes")
    p_train.add_argument("--seed", type=int, help="master seed")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--config", help="config file (key=value lines)")
    p_train.add_argument("--set", action="append", metavar="KEY=VALUE",
                         help="override one config key (repeatable)")
    p_train.add_argument("--server", help="send the job to a running service URL")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p_eval.add_argument("--checkpoint", required=True, help="checkpoint file")
    p_eval.add_argument("--episodes", type=int, default=10)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--server", help="send the job to a running service URL")
    p_eval.set_defaults(func=cmd_eval)

    p_self = sub.add_parser("selftest", help="run built-in verification suites")
    p_self.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    p_self.add_argument("--server", help="send the job to a running service URL")
    p_self.set_defaults(func=cmd_selftest)

    p_defaults = sub.add_parser("print-defaults", help="print every config key=default")
    p_defaults.set_defaults(func=cmd_print_defaults)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ToolkitError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
