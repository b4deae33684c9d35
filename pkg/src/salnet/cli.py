"""Command line: salnet {extract,sample,train,predict,evaluate}.

Settings come from ``--config`` (INI), then SALNET_<SECTION>_<KEY>
environment variables, then flags. Exit status is 0 on success, 2 for bad
input and 3 when training diverges.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import config as cfgmod
from . import pipeline
from .cnn.solver import TrainingDiverged

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED = 0, 2, 3


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="INI file with [channels] [sampler] [arch] [solver] [predict] sections")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="salnet", description="Patch-based video saliency pipeline.", parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("extract", parents=[common], help="compute per-frame feature stacks")
    e.add_argument("manifest")
    e.add_argument("out_dir")
    e.add_argument("--channels", help="3k, 4k, 8k, rgb8k or hsv8k")
    e.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("sample", parents=[common], help="sample salient / non-salient training patches")
    s.add_argument("manifest")
    s.add_argument("features_dir")
    s.add_argument("out")
    s.add_argument("-t", "--patch-size", type=int, dest="t")
    s.add_argument("--epsilon", type=float)
    s.add_argument("-J", "--levels", type=int, dest="j")
    s.add_argument("--seed", type=int)
    s.add_argument("--max-per-frame", type=int)
    s.add_argument("--nonsalient-per-frame", type=int)
    s.add_argument("--sigma-px", type=float)
    s.add_argument("--no-balance", dest="balance", action="store_const", const=False)

    t = sub.add_parser("train", parents=[common], help="train the patch classifier")
    t.add_argument("dataset")
    t.add_argument("out_model")
    t.add_argument("--val", help="separate validation patch dataset")
    t.add_argument("--report", help="accuracy CSV (default: <out_model stem>.report.csv)")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--stop-after", type=int, help="pause after this many updates")
    t.add_argument("--preset", choices=["default", "sd", "desk"])
    t.add_argument("--filler", choices=["gaussian", "msra"])
    t.add_argument("--strategy", choices=["per_epoch_full_pass", "fixed_chunk"])
    t.add_argument("--learning-rate", "--lr", type=float, dest="learning_rate")
    t.add_argument("--momentum", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--max-iterations", type=int)
    t.add_argument("--validation-interval", type=int)
    t.add_argument("--seed", type=int)

    pr = sub.add_parser("predict", parents=[common], help="write dense saliency maps")
    pr.add_argument("model")
    pr.add_argument("manifest")
    pr.add_argument("out_dir")
    pr.add_argument("--features", help="feature directory from 'extract' (computed on the fly otherwise)")
    pr.add_argument("--workers", type=int, default=1)
    pr.add_argument("--pgm", action="store_const", const=True, help="also write 8-bit PGM maps")

    ev = sub.add_parser("evaluate", parents=[common], help="score map directories against fixations")
    ev.add_argument("manifest")
    ev.add_argument("out_report")
    ev.add_argument("maps", nargs="+", help="map directories, optionally as name=dir")
    ev.add_argument("--workers", type=int, default=1)
    return p


def run(args) -> None:
    cfg = cfgmod.load_config(getattr(args, "config", None))
    if args.command == "extract":
        cfgmod.override(cfg, "channels", config=args.channels)
        paths = pipeline.cmd_extract(args.manifest, cfg["channels"]["config"], args.out_dir, workers=args.workers)
        print(f"wrote {len(paths)} feature stacks to {args.out_dir}")
    elif args.command == "sample":
        cfgmod.override(cfg, "sampler", t=args.t, epsilon=args.epsilon, j=args.j, seed=args.seed,
                        max_per_frame=args.max_per_frame, nonsalient_per_frame=args.nonsalient_per_frame,
                        sigma_px=args.sigma_px, balance=args.balance)
        s = cfg["sampler"]
        index = pipeline.cmd_sample(args.manifest, args.features_dir, s["t"], s["epsilon"], s["j"], s["seed"],
                                    args.out, max_per_frame=s["max_per_frame"],
                                    nonsalient_per_frame=s["nonsalient_per_frame"], sigma_px=s["sigma_px"],
                                    balance=s["balance"])
        print(f"wrote {index}")
    elif args.command == "train":
        cfgmod.override(cfg, "arch", preset=args.preset, filler=args.filler, seed=args.seed)
        cfgmod.override(cfg, "solver", strategy=args.strategy, learning_rate=args.learning_rate,
                        momentum=args.momentum, batch_size=args.batch_size, epochs=args.epochs,
                        max_iterations=args.max_iterations, validation_interval=args.validation_interval,
                        seed=args.seed)
        _, report = pipeline.cmd_train(args.dataset, args.out_model, arch=cfg["arch"],
                                       solver=cfgmod.solver_config(cfg), val_dataset=args.val,
                                       val_fraction=cfg["solver"]["val_fraction"], resume=args.resume,
                                       report_path=args.report, stop_after=args.stop_after)
        print(f"best accuracy {report.best_accuracy:.4f} at iteration {report.best_iteration} "
              f"({report.iterations_run} updates)")
    elif args.command == "predict":
        cfgmod.override(cfg, "predict", pgm=args.pgm)
        paths = pipeline.cmd_predict(args.model, args.manifest, args.out_dir, features_dir=args.features,
                                     workers=args.workers, batch_size=cfg["predict"]["batch_size"],
                                     pgm=cfg["predict"]["pgm"])
        print(f"wrote {len(paths)} maps to {args.out_dir}")
    elif args.command == "evaluate":
        report = pipeline.cmd_evaluate(args.maps, args.manifest, args.out_report, workers=args.workers)
        print(report.to_text(), end="")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = logging.INFO if getattr(args, "verbose", False) else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    try:
        run(args)
    except TrainingDiverged as exc:
        print(f"salnet: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValueError, OSError, KeyError) as exc:
        print(f"salnet: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
