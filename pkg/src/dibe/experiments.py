"""Experiment runners shared by the CLI and the acceptance tests."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
import csv
import io

from .guide import TrialResult, grid_search, oii_guided_search, uniform_grid, comparison_table
from .losses import Family, LossConfig
from .synth import DatasetSpec, generate_dataset, load_dataset, Dataset
from .trainer import LOG_HEADER, ToyModel, TrainConfig, train


def dataset_for(cfg):
    """Load ``cfg.dataset_dir`` if set, else generate from ``cfg.dataset``."""
    if cfg.dataset_dir:
        return load_dataset(cfg.dataset_dir)
    return generate_dataset(cfg.dataset)


def run_training(train_cfg, data, prior=None):
    """Train a fresh toy model; returns its TrainingLog."""
    model = ToyModel.initialize(train_cfg.seed, train_cfg.hidden, prior)
    return train(model, Dataset.stack(data.train), Dataset.stack(data.val), train_cfg)


def _run_job(args):
    return run_training(*args)


def run_many(train_cfgs, data, prior=None, jobs=1):
    """Logs for several configs, in input order; ``jobs > 1`` trains in worker processes.

    ``data`` is one Dataset shared by every run or a list with one per config.
    """
    datas = data if isinstance(data, list) else [data] * len(train_cfgs)
    args = [(c, d, prior) for c, d in zip(train_cfgs, datas)]
    if jobs <= 1 or len(args) <= 1:
        return [_run_job(a) for a in args]
    with ProcessPoolExecutor(max_workers=min(jobs, len(args))) as pool:
        return list(pool.map(_run_job, args))


def curves_csv(labels, logs, key="value"):
    """One table with a leading ``key`` column followed by every log row."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow((key,) + LOG_HEADER)
    for label, log in zip(labels, logs):
        for line in log.to_csv().splitlines()[1:]:
            writer.writerow([label] + line.split(","))
    return buf.getvalue()


def train_fn_for(train_cfg, data, prior=None, tie_beta=True):
    """alpha -> TrialResult closure over a fixed training setup (final logged row)."""

    def fn(alpha):
        cfg = replace(train_cfg, loss=train_cfg.loss.with_alpha(alpha, tie_beta))
        log = run_training(cfg, data, prior)
        last = log.final
        return TrialResult(last.oii, last.iou, last.pa, log)

    return fn


def guided_vs_grid(train_cfg, data, guidance, grid_parts=4, prior=None):
    """Run both selection strategies; returns (trace, grid_result, comparison rows)."""
    fn = train_fn_for(train_cfg, data, prior, guidance.tie_beta)
    trace = oii_guided_search(fn, guidance)
    grid = grid_search(fn, uniform_grid(guidance.alpha_range, grid_parts), guidance.objective)
    return trace, grid, comparison_table(grid, trace, guidance.objective)


# --------------------------------------------------------------------------
# fixed protocols for the two training-based properties


@dataclass(frozen=True)
class Protocol:
    dataset: DatasetSpec
    train: TrainConfig
    seeds: tuple = (0, 1, 2)


STEERING_ALPHAS = (0.1, 0.5, 0.9)


def steering_protocol(family, epochs=50):
    """r=191 data; final OII should fall as alpha (beta = 1 - alpha) grows."""
    return Protocol(
        DatasetSpec(n_train=96, n_val=16, width=64, height=64, target_ratio=191.0, seed=0),
        TrainConfig(lr=0.1, momentum=0.9, batch_size=8, epochs=epochs, eval_every=5,
                    loss=LossConfig.for_family(family)),
    )


def convergence_protocol(family, epochs=50):
    """r=2228 data; compares how soon validation IoU first exceeds 0.2."""
    return Protocol(
        DatasetSpec(n_train=96, n_val=16, width=64, height=64, target_ratio=2228.0, seed=0),
        TrainConfig(lr=0.01, momentum=0.9, batch_size=8, epochs=epochs, eval_every=5,
                    loss=LossConfig.for_family(family, alpha=0.5, beta=0.5)),
    )


def _seed_data(proto):
    """One dataset per seed; the dataset is drawn with the run's seed."""
    return {s: generate_dataset(replace(proto.dataset, seed=s)) for s in proto.seeds}


def steering_runs(family, jobs=1, epochs=50):
    """``{seed: [log per alpha]}`` under the steering protocol."""
    proto = steering_protocol(family, epochs)
    data = _seed_data(proto)
    keys = [(s, a) for s in proto.seeds for a in STEERING_ALPHAS]
    cfgs = [replace(proto.train, seed=s, loss=proto.train.loss.with_alpha(a)) for s, a in keys]
    logs = run_many(cfgs, [data[s] for s, _ in keys], jobs=jobs)
    n = len(STEERING_ALPHAS)
    return {s: logs[i * n : (i + 1) * n] for i, s in enumerate(proto.seeds)}


def convergence_runs(families=(Family.DIBE_REG, Family.FT), jobs=1, epochs=50):
    """``{family: {seed: log}}`` under the convergence protocol."""
    protos = {Family(f): convergence_protocol(f, epochs) for f in families}
    data = _seed_data(next(iter(protos.values())))
    keys = [(f, s) for f, p in protos.items() for s in p.seeds]
    cfgs = [replace(protos[f].train, seed=s) for f, s in keys]
    logs = run_many(cfgs, [data[s] for _, s in keys], jobs=jobs)
    out = {f: {} for f in protos}
    for (f, s), log in zip(keys, logs):
        out[f][s] = log
    return out
