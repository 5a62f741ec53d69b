"""Generate, train and evaluate in one run directory.

Layout of a finished run::

    <run>/config.toml      resolved configuration
    <run>/data/            train.jsonl, test.jsonl, generator.json, spec.json
    <run>/model.ckpt       trained parameters
    <run>/train_log.csv    iteration, loss, mean_bound, tau
    <run>/metrics.csv      see MetricsReport.rows
    <run>/manifest.json    file digests, timings and versions
"""

import csv
import hashlib
import json
import logging
import platform
import shutil
import time
from datetime import datetime
from pathlib import Path

import numpy as np
import scipy

from .learning import train
from .metrics import evaluate
from .model import PotentialModel, save_checkpoint
from .sampler import Temperature
from .synthetic import generate_dataset, load_jsonl

log = logging.getLogger(__name__)


def default_run_name():
    return datetime.now().strftime("run-%Y%m%d-%H%M%S")


def write_train_log(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss", "mean_bound", "tau"])
        for t, loss, bound, tau in history.rows:
            w.writerow([t, repr(float(loss)), repr(float(bound)), repr(float(tau))])


def read_train_log(path):
    with open(path, newline="") as fh:
        return [(int(r["iteration"]), float(r["loss"]), float(r["mean_bound"]), float(r["tau"]))
                for r in csv.DictReader(fh)]


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def prepare_run_dir(out_root, name=None, force=False):
    run_dir = Path(out_root) / (name or default_run_name())
    if run_dir.exists():
        if not force:
            raise FileExistsError(f"{run_dir} already exists; pass force=True (--force) to overwrite")
        shutil.rmtree(run_dir)
    run_dir.mkdir(parents=True)
    return run_dir


def run_experiment(config, out_root, name=None, force=False, dry_run=False, workers=1):
    """Run the whole pipeline for a validated :class:`RunConfig`.

    With ``dry_run`` nothing is written and the planned run directory is
    returned alongside ``None`` metrics.
    """
    target = Path(out_root) / (name or default_run_name())
    if dry_run:
        return target, None
    run_dir = prepare_run_dir(out_root, name, force)
    timings = {}

    t0 = time.perf_counter()
    (run_dir / "config.toml").write_text(config.to_toml())
    data_dir = generate_dataset(config.data, run_dir / "data")
    train_set = load_jsonl(data_dir / "train.jsonl")
    test_set = load_jsonl(data_dir / "test.jsonl")
    timings["generate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    model = PotentialModel.initialize(config.model_config(), seed=config.model.seed)
    model, history = train(train_set, config.train_config(), model)
    timings["train"] = time.perf_counter() - t0
    save_checkpoint(run_dir / "model.ckpt", model, extra={"iterations": config.train.iterations})
    write_train_log(run_dir / "train_log.csv", history)

    t0 = time.perf_counter()
    temp = Temperature(tau=config.eval.tau, tau_min=config.eval.tau)
    report = evaluate(model, test_set, config.eval.ks, config.eval_emd(), temp,
                      config.eval.seed, workers=workers)
    timings["evaluate"] = time.perf_counter() - t0
    report.write_csv(run_dir / "metrics.csv")

    files = sorted(p for p in run_dir.rglob("*") if p.is_file())
    manifest = {
        "run_dir": str(run_dir),
        "created": datetime.now().isoformat(timespec="seconds"),
        "config": config.to_dict(),
        "files": {str(p.relative_to(run_dir)): _digest(p) for p in files},
        "timings_s": timings,
        "workers": workers,
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "mean_recall": {str(k): v for k, v in report.mean_recall.items()},
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    log.info("run finished in %s", run_dir)
    return run_dir, report
