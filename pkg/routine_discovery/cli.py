# -*- coding: utf-8 -*-
"""
Command line entry point.

    python -m routine_discovery.cli run --config configs/fixture.toml [--seed N] [--out DIR]
    python -m routine_discovery.cli synth --config configs/fixture.toml --out DIR
    python -m routine_discovery.cli report --in DIR

Exit codes: 0 success, 1 at least one failed cell (or unexpected error), 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from .experiment import run_experiments
from .report import rerender
from .utils.dataset import generate_synthetic, write_corpus
from .utils.errors import ConfigError, CorpusFormatError
from .utils.logger import get_logger, parse_level, setup_logging
from .utils.settings import METHOD_ORDER, MODE_ORDER, RunConfig, load_config

LOGGER = get_logger(__name__)

EXIT_OK = 0
EXIT_CELL_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def _csv_list(raw: str) -> List[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="TOML 或 YAML 配置文件；缺省使用内置默认值")
    parser.add_argument("--seed", type=int, default=None, help="主随机种子，覆盖配置文件与 ROUTINE_SEED")
    parser.add_argument(
        "--set",
        dest="set_items",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="覆盖任意配置项，例如 --set iforest.n_trees=200，可重复",
    )


def _build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="routine_discovery",
        description="Discover routine and non-routine days as density outliers.",
    )
    parser.add_argument("--log-level", default=None, help="日志级别，例如 DEBUG；也可用 ROUTINE_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="运行完整的 方法 x 特征 实验矩阵")
    _add_config_args(run)
    run.add_argument("--out", default=None, help="输出目录，覆盖 out_dir")
    run.add_argument("--workers", type=int, default=None, help="并行单元数")
    run.add_argument("--contamination", type=float, default=None, help="阈值使用的异常比例 (0, 0.5]")
    run.add_argument("--modes", type=_csv_list, default=None, help=f"逗号分隔，可选 {','.join(MODE_ORDER)}")
    run.add_argument("--methods", type=_csv_list, default=None, help=f"逗号分隔，可选 {','.join(METHOD_ORDER)}")
    run.add_argument("--no-plots", action="store_true", help="不生成 SVG 图")

    synth = sub.add_parser("synth", help="按配置生成合成语料并写成 CSV 目录")
    _add_config_args(synth)
    synth.add_argument("--out", required=True, help="语料输出目录")

    report = sub.add_parser("report", help="根据 manifest.json 重新绘制所有图")
    report.add_argument("--in", dest="in_dir", required=True, help="run 命令的输出目录")
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides: Dict[str, Any] = {"seed": args.seed}
    if args.command == "run":
        overrides.update(
            {
                "out_dir": args.out,
                "workers": args.workers,
                "contamination": args.contamination,
                "modes": args.modes,
                "methods": args.methods,
                "plots": False if args.no_plots else None,
            }
        )
    return load_config(args.config, overrides=overrides, set_items=args.set_items)


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    manifest = run_experiments(cfg)
    for row in manifest.results:
        acc = row.get("acc")
        LOGGER.info("%-20s %-7s acc=%s", row["method"], row["features"], "n/a" if acc is None else f"{acc:.3f}")
    if not manifest.ok:
        for cell in manifest.failed_cells:
            LOGGER.error("failed: %s/%s/%s %s", cell["user"], cell["method"], cell["mode"], cell["reason"])
        return EXIT_CELL_FAILURE
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    dataset = generate_synthetic(cfg.synthetic, cfg.seed)
    write_corpus(dataset, args.out)
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    try:
        written = rerender(args.in_dir)
    except FileNotFoundError as exc:
        raise ConfigError(f"no manifest.json under {args.in_dir}") from exc
    LOGGER.info("Re-rendered %d figure(s)", len(written))
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "synth": _cmd_synth, "report": _cmd_report}


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_arg_parser()
    args = parser.parse_args(argv)
    try:
        if args.log_level:
            level = parse_level(args.log_level)
            if level is None:
                raise ConfigError(f"unknown log level {args.log_level!r}")
            setup_logging()
            logging.getLogger().setLevel(level)
        return COMMANDS[args.command](args)
    except (ConfigError, CorpusFormatError) as exc:
        LOGGER.error("%s", exc)
        print(f"[error] {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except KeyboardInterrupt:
        print("\n[exit ] 手动中断", file=sys.stderr)
        return 130
    except Exception as exc:
        LOGGER.exception("Run failed")
        print(f"[error] 运行失败: {exc}", file=sys.stderr)
        return EXIT_CELL_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
