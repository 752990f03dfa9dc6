"""Command line: ``nfvscale run | train | eval``."""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .ddpg import DdpgAgent
from .metrics import RunMetrics


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nfvscale", description="NFV auto-scaling simulator with learned thresholds")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="simulate one configured run and write CSV artifacts")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    r.add_argument("--out", required=True)
    r.add_argument("--checkpoint", default=None, help="use a trained agent instead of the configured policy")

    t = sub.add_parser("train", help="train the threshold agent")
    t.add_argument("--config", required=True)
    t.add_argument("--episodes", type=int, required=True)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", default="runs/train")

    e = sub.add_parser("eval", help="evaluate a checkpoint greedily on held-out seeds")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", default=None, help="defaults to config.yaml next to the checkpoint")
    e.add_argument("--seeds", type=int, nargs="+", default=None)
    e.add_argument("--out", default=None)
    return p


def _print_metrics(m: RunMetrics, label: str = "") -> None:
    head = f"{label}: " if label else ""
    print(f"{head}loss={m.packet_loss_rate:.5f} alpha={m.alpha:.3f} pun={m.pun:.4f} "
          f"N={m.n_peak} vm_ticks={m.vm_ticks}")


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    from . import harness

    try:
        if args.cmd == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = cfg.with_seed(args.seed)
            agent = None
            if args.checkpoint:
                cfg = cfg.with_policy(kind="ddpg", checkpoint=args.checkpoint)
                agent = DdpgAgent.load(args.checkpoint)
            m = harness.run(cfg, args.out, agent)
            _print_metrics(m, f"seed {cfg.seed}")
            return 0

        if args.cmd == "train":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = cfg.with_seed(args.seed)
            if args.episodes < 0:
                raise ConfigError("episodes", "must be >= 0")
            res = harness.train(cfg, args.episodes, args.out)
            shutil.copyfile(args.config, Path(args.out) / "config.yaml")
            print(f"checkpoint {res.checkpoint} (best eval alpha {res.best_alpha}, episode {res.best_episode})")
            return 0

        if args.cmd == "eval":
            ckpt = Path(args.checkpoint)
            cfg = load_config(args.config or ckpt.parent / "config.yaml")
            agent = DdpgAgent.load(ckpt)
            seeds = args.seeds or list(cfg.train.eval_seeds)
            ms = harness.evaluate(agent, cfg, seeds)
            for s, m in zip(seeds, ms):
                _print_metrics(m, f"seed {s}")
            if args.out:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                harness.write_table(out / "eval.csv", ["seed", *RunMetrics.columns()],
                                    [[s, *m.row()] for s, m in zip(seeds, ms)])
            return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
