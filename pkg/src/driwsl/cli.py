"""Command-line entry point: ``driwsl <command> [options]``."""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .errors import DriwslError
from .experiment import run_experiment, write_train_log
from .graph import SceneGraph
from .learning import train
from .metrics import evaluate, predict
from .model import PotentialModel, load_checkpoint, save_checkpoint
from .oracle import exact_inference
from .sampler import Temperature
from .synthetic import generate_dataset, load_jsonl

log = logging.getLogger("driwsl")


def _common(suppress=False):
    # Global flags are accepted before or after the subcommand; the copy on
    # the subcommands must not reset values given before it.
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, default=d(None), help="TOML run configuration")
    p.add_argument("--seed", type=int, default=d(None), help="override every seed in the configuration")
    p.add_argument("--out", type=Path, default=d(None), help="output directory")
    p.add_argument("--threads", type=int, default=d(1), help="worker processes for inference")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def build_parser():
    common = _common(suppress=True)
    parser = argparse.ArgumentParser(prog="driwsl", parents=[_common()])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="write a synthetic dataset")

    p = sub.add_parser("train", parents=[common], help="train a model on a dataset directory")
    p.add_argument("--data", type=Path, required=True, help="directory holding train.jsonl")

    p = sub.add_parser("infer", parents=[common], help="per-node posteriors for graphs")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--graphs", type=Path, required=True, help="JSON lines of graphs or examples")

    p = sub.add_parser("eval", parents=[common], help="mean Recall@K on labelled graphs")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True, help="test.jsonl or a dataset directory")

    p = sub.add_parser("oracle", parents=[common], help="exact inference by enumeration")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--graphs", type=Path, required=True)

    p = sub.add_parser("run", parents=[common], help="generate, train and evaluate")
    p.add_argument("--name", help="run directory name (default: timestamp)")
    p.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    p.add_argument("--dry-run", action="store_true", help="validate the configuration only")
    return parser


def _load_config(args):
    cfg = cfgmod.load_config(args.config) if args.config else cfgmod.RunConfig()
    return cfg.with_seed(args.seed) if args.seed is not None else cfg


def _read_graphs(path):
    graphs = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                doc = json.loads(line)
                graphs.append(SceneGraph.from_dict(doc.get("graph", doc)))
    return graphs


def _out_dir(args, default):
    out = args.out or Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _eval_setup(cfg):
    return cfg.eval_emd(), Temperature(tau=cfg.eval.tau, tau_min=cfg.eval.tau)


def cmd_generate(args, cfg):
    out = generate_dataset(cfg.data, _out_dir(args, "data"))
    print(f"wrote dataset to {out}")


def cmd_train(args, cfg):
    data = load_jsonl(args.data / "train.jsonl")
    out = _out_dir(args, "model")
    model = PotentialModel.initialize(cfg.model_config(), seed=cfg.model.seed)
    model, history = train(data, cfg.train_config(), model)
    save_checkpoint(out / "model.ckpt", model, extra={"iterations": cfg.train.iterations})
    write_train_log(out / "train_log.csv", history)
    print(f"final loss {history.rows[-1][1]:.4f}; checkpoint in {out / 'model.ckpt'}"
          if history.rows else f"no iterations run; checkpoint in {out / 'model.ckpt'}")


def cmd_infer(args, cfg):
    model, _ = load_checkpoint(args.checkpoint)
    graphs = _read_graphs(args.graphs)
    emd_cfg, temp = _eval_setup(cfg)
    results = predict(model, graphs, emd_cfg, temp, cfg.eval.seed, workers=args.threads)
    out = _out_dir(args, ".") / "predictions.jsonl"
    with open(out, "w") as fh:
        for k, res in enumerate(results):
            fh.write(json.dumps({"id": k, "nodes": res.to_dict()}, sort_keys=True) + "\n")
    print(f"wrote {len(results)} predictions to {out}")


def cmd_eval(args, cfg):
    model, _ = load_checkpoint(args.checkpoint)
    path = args.data / "test.jsonl" if args.data.is_dir() else args.data
    emd_cfg, temp = _eval_setup(cfg)
    report = evaluate(model, load_jsonl(path), cfg.eval.ks, emd_cfg, temp, cfg.eval.seed,
                      workers=args.threads)
    out = _out_dir(args, ".") / "metrics.csv"
    report.write_csv(out)
    for k in report.ks:
        print(f"mR@{k} = {report.mean_recall[k]:.4f}")
    print(f"metrics written to {out}")


def cmd_oracle(args, cfg):
    model, _ = load_checkpoint(args.checkpoint)
    out = _out_dir(args, ".") / "oracle.jsonl"
    graphs = _read_graphs(args.graphs)
    with open(out, "w") as fh:
        for k, graph in enumerate(graphs):
            fh.write(json.dumps({"id": k, **exact_inference(graph, model).to_dict()},
                                sort_keys=True) + "\n")
    print(f"wrote {len(graphs)} oracle results to {out}")


def cmd_run(args, cfg):
    out_root = args.out or Path("runs")
    run_dir, report = run_experiment(cfg, out_root, args.name, args.force, args.dry_run,
                                     workers=args.threads)
    if report is None:
        print(f"configuration is valid; a run would write to {run_dir}")
        return
    for k in report.ks:
        print(f"mR@{k} = {report.mean_recall[k]:.4f}")
    print(f"run directory: {run_dir}")


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "oracle": cmd_oracle,
    "run": cmd_run,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = _load_config(args)
        COMMANDS[args.command](args, cfg)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DriwslError, FileExistsError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
