"""Command line front end; every subcommand reads a JSON config and writes JSON plus CSV."""
from __future__ import annotations

import argparse
import json
import sys
import time

from . import experiments as ex
from .environment import EnvironmentSpec


def _load(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _spec(cfg: dict) -> EnvironmentSpec:
    return EnvironmentSpec.from_dict(cfg.get("environment", {"d": 2}))


def cmd_env_dump(cfg: dict):
    fixed = cfg.get("fixed_s")
    rep, tables = ex.run_env_dump(_spec(cfg), int(cfg.get("radius", 5)),
                                  tuple(tuple(a) for a in fixed) if fixed else None)
    return "environment", rep, tables


def cmd_walk_run(cfg: dict):
    rep, tables = ex.run_walk(_spec(cfg), int(cfg.get("n", 10 ** 5)), int(cfg.get("walk_seed", 0)),
                              cfg.get("start"), int(cfg.get("top", 10)))
    return "walk", rep, tables


def cmd_levelsets(cfg: dict):
    rep, tables = ex.run_levelsets(_spec(cfg), [int(k) for k in cfg.get("shells", [1, 2, 3])])
    return "levelsets", rep, tables


def cmd_landmarks(cfg: dict):
    rep, tables = ex.run_landmarks(_spec(cfg), float(cfg.get("n", 10 ** 6)),
                                   int(cfg.get("environments", 10)),
                                   float(cfg.get("epsilon", 0.2)))
    return "landmarks", rep, tables


def cmd_quenched(cfg: dict):
    rep = ex.run_quenched(ex.ExperimentConfig.from_dict(cfg))
    return "quenched", rep, ex.quenched_tables(rep)


def cmd_annealed(cfg: dict):
    rep = ex.run_annealed(ex.ExperimentConfig.from_dict(cfg))
    return "annealed", rep, ex.annealed_tables(rep)


def cmd_oracle(cfg: dict):
    rep = ex.run_oracle_suite(ex.OracleSuiteConfig.from_dict(cfg))
    return "oracle", rep, ex.oracle_tables(rep)


COMMANDS = {
    ("env", "dump"): cmd_env_dump,
    ("walk", "run"): cmd_walk_run,
    ("levelsets",): cmd_levelsets,
    ("landmarks",): cmd_landmarks,
    ("quenched",): cmd_quenched,
    ("annealed",): cmd_annealed,
    ("oracle",): cmd_oracle,
}


def _add_io(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output directory (overrides the config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shellwalk",
                                     description="random walks in a radial random potential")
    sub = parser.add_subparsers(dest="command", required=True)
    env = sub.add_parser("env", help="environment tools")
    env_sub = env.add_subparsers(dest="action", required=True)
    _add_io(env_sub.add_parser("dump", help="write S, delta and V on a ball"))
    walk = sub.add_parser("walk", help="single trajectories")
    walk_sub = walk.add_subparsers(dest="action", required=True)
    _add_io(walk_sub.add_parser("run", help="run one walk and record local times"))
    for name, text in (("levelsets", "partition shells into level classes"),
                       ("landmarks", "locate the valley and test the good-environment event"),
                       ("quenched", "occupation fractions against the quenched ratios"),
                       ("annealed", "supremum law against conditioned-path samples"),
                       ("oracle", "exact identity and bound suite")):
        _add_io(sub.add_parser(name, help=text))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    key = (args.command, args.action) if hasattr(args, "action") else (args.command,)
    cfg = _load(args.config)
    out = args.out or cfg.get("out") or "out"
    if args.command in ("quenched", "annealed", "oracle"):
        cfg["out"] = out
    t0 = time.perf_counter()
    name, report, tables = COMMANDS[key](cfg)
    ex.write_report(report, out, name, tables)
    ok = bool(report.get("pass", False))
    print(f"{' '.join(key)}: {'pass' if ok else 'FAIL'} "
          f"({time.perf_counter() - t0:.1f}s) -> {out}/{name}.json", file=sys.stderr)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
