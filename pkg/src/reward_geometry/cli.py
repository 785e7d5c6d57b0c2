"""``reward-geometry`` command-line interface.

Exit codes: 0 success or passing experiment, 1 input error, 2 solver
non-convergence, 3 brute-force cap exceeded, 4 failing experiment verdict.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .behaviour import BehaviouralModelConfig, ModelKind, model_policy
from .lab import ExperimentReport, run_experiment_config
from .mdp import load_mdp, load_reward, read_json, reward_to_dict
from .solvers import (
    DEFAULT_CAP,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    CapExceededError,
    ConvergenceError,
    OrderVerdict,
    policy_order_oracle,
    soft_value_iteration,
    value_iteration,
)
from .starc import DEFAULT_CONFIG, StarcConfig, starc_distance
from .transforms import TransformSpec, apply_transform_spec, same_optimal_policies

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONCONVERGENCE = 2
EXIT_CAP = 3
EXIT_VERDICT_FAIL = 4


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors are input errors, so they exit with code 1 rather than argparse's 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="fixed-point solver tolerance")
    common.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER, help="fixed-point sweep limit")
    common.add_argument("--seed", type=int, default=0, help="seed for randomised steps")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", type=Path, help="output file (default: standard output)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(prog="reward-geometry", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    solve = sub.add_parser("solve", parents=[common], help="optimal (and optionally soft) values")
    solve.add_argument("mdp", type=Path)
    solve.add_argument("reward", type=Path)
    solve.add_argument("--alpha", type=float, help="also compute the soft Q-function at this temperature")

    compare = sub.add_parser("compare", parents=[common], help="compare two rewards")
    compare.add_argument("mdp", type=Path)
    compare.add_argument("r1", type=Path)
    compare.add_argument("r2", type=Path)
    compare.add_argument("--metric", choices=("starc", "ord", "opt"), default="starc")
    compare.add_argument("--cap", type=int, default=DEFAULT_CAP, help="deterministic-policy limit for ord")
    compare.add_argument("--config", type=Path, help="STARC config JSON (default: standard config)")

    policy = sub.add_parser("policy", parents=[common], help="policy of a behavioural model")
    policy.add_argument("mdp", type=Path)
    policy.add_argument("reward", type=Path)
    policy.add_argument("--model", choices=[k.value for k in ModelKind], required=True)
    policy.add_argument("--beta", type=float)
    policy.add_argument("--alpha", type=float)

    transform = sub.add_parser("transform", parents=[common], help="apply a transformation spec")
    transform.add_argument("reward", type=Path)
    transform.add_argument("spec", type=Path)
    transform.add_argument("mdp", type=Path)

    experiment = sub.add_parser("experiment", parents=[common], help="run an experiment config")
    experiment.add_argument("config", type=Path)
    return parser


# ---------------------------------------------------------------------------
# Output


def _flatten(prefix: str, value: Any, rows: list[tuple[str, str]]) -> None:
    if isinstance(value, dict):
        for key, item in value.items():
            _flatten(f"{prefix}.{key}" if prefix else str(key), item, rows)
    elif isinstance(value, list):
        for i, item in enumerate(value):
            _flatten(f"{prefix}[{i}]", item, rows)
    else:
        rows.append((prefix, repr(value) if isinstance(value, float) else json.dumps(value)))


def to_csv(document: dict[str, Any]) -> str:
    rows: list[tuple[str, str]] = []
    _flatten("", document, rows)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["key", "value"])
    writer.writerows(rows)
    return buffer.getvalue()


def _emit(args: argparse.Namespace, document: dict[str, Any], csv_text: str | None = None) -> None:
    if args.format == "csv":
        text = csv_text if csv_text is not None else to_csv(document)
    else:
        text = json.dumps(document, allow_nan=False) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# Commands


def _load(loader, *paths: Path):
    for path in paths:
        if not path.is_file():
            raise InputError(f"{path}: no such file")
    try:
        return loader()
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def cmd_solve(args: argparse.Namespace) -> int:
    mdp = _load(lambda: load_mdp(args.mdp), args.mdp)
    r = _load(lambda: load_reward(args.reward, mdp), args.reward)
    if args.alpha is not None and not args.alpha > 0:
        raise InputError("--alpha must be positive")
    values = value_iteration(mdp, r, args.tol, args.max_iter)
    document: dict[str, Any] = {
        "v_star": values.v_star.tolist(),
        "q_star": values.q_star.tolist(),
        "optimal_actions": [list(actions) for actions in values.optimal_actions],
    }
    if args.alpha is not None:
        document["q_soft"] = soft_value_iteration(mdp, r, args.alpha, args.tol, args.max_iter).q_soft.tolist()
    _emit(args, document)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    mdp = _load(lambda: load_mdp(args.mdp), args.mdp)
    r1 = _load(lambda: load_reward(args.r1, mdp), args.r1)
    r2 = _load(lambda: load_reward(args.r2, mdp), args.r2)
    if args.metric == "starc":
        cfg = DEFAULT_CONFIG
        if args.config is not None:
            cfg = _load(lambda: StarcConfig.from_dict(read_json(args.config)), args.config)
        document: dict[str, Any] = {"starc": starc_distance(r1, r2, mdp, cfg)}
    elif args.metric == "ord":
        verdict = policy_order_oracle(mdp, r1, r2, cap=args.cap)
        document = {"same_order": verdict is OrderVerdict.SAME_ORDER}
    else:
        document = {"same_optimal": same_optimal_policies(mdp, r1, r2, args.tol)}
    _emit(args, document)
    return EXIT_OK


def cmd_policy(args: argparse.Namespace) -> int:
    try:
        model = BehaviouralModelConfig(args.model, args.beta, args.alpha)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    mdp = _load(lambda: load_mdp(args.mdp), args.mdp)
    r = _load(lambda: load_reward(args.reward, mdp), args.reward)
    result = model_policy(mdp, r, model, args.tol, args.max_iter)
    if isinstance(result, np.ndarray):
        document: dict[str, Any] = {"probs": result.tolist()}
    else:
        document = {"allowed": [list(actions) for actions in result]}
    _emit(args, document)
    return EXIT_OK


def cmd_transform(args: argparse.Namespace) -> int:
    mdp = _load(lambda: load_mdp(args.mdp), args.mdp)
    r = _load(lambda: load_reward(args.reward, mdp), args.reward)
    spec = _load(lambda: TransformSpec.from_dict(read_json(args.spec)), args.spec)
    if args.seed < 0:
        raise InputError("--seed must be non-negative")
    try:
        out = apply_transform_spec(spec, r, mdp, args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    _emit(args, reward_to_dict(out))
    return EXIT_OK


def load_experiment_config(path: Path) -> dict[str, Any]:
    """Read a JSON or TOML config; a relative ``params.mdp_path`` is resolved against the config's folder."""
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            config = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ValueError(f"{path}: invalid TOML ({exc})") from exc
    else:
        config = read_json(path)
    if not isinstance(config, dict):
        raise ValueError("experiment config must be an object")
    params = config.get("params", {})
    if isinstance(params, dict) and "mdp_path" in params:
        params = dict(params)
        mdp_path = Path(params.pop("mdp_path"))
        if not mdp_path.is_absolute():
            mdp_path = path.parent / mdp_path
        params["mdp"] = read_json(mdp_path)
        config = {**config, "params": params}
    return config


def cmd_experiment(args: argparse.Namespace) -> int:
    config = _load(lambda: load_experiment_config(args.config), args.config)
    try:
        report: ExperimentReport = run_experiment_config(config)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    _emit(args, report.to_dict(), report.to_csv() if args.format == "csv" else None)
    return EXIT_OK if report.verdict else EXIT_VERDICT_FAIL


COMMANDS = {
    "solve": cmd_solve,
    "compare": cmd_compare,
    "policy": cmd_policy,
    "transform": cmd_transform,
    "experiment": cmd_experiment,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ConvergenceError as exc:
        print(f"reward-geometry: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except CapExceededError as exc:
        print(f"reward-geometry: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (InputError, ValueError) as exc:
        print(f"reward-geometry: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
