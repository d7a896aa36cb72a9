"""Training loop, sweep drivers and CSV sinks.

train_single runs one fully seeded training job and returns a RunRecord with
the per-step loss trajectory, final validation loss, divergence flag and wall
time. Sweep drivers expand a config into a grid of jobs (over scheme, width,
density, learning rate or init scale, and seed) and hand back all records plus
the selected optimum per curve.

Everything is deterministic: identical configs produce bit-identical loss
trajectories, which the reproducibility checks rely on.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .corpus import BatchSampler, load_corpus, validation_batches
from .dst import gmp_target_sparsity, magnitude_prune, rigl_update
from .errors import ConfigError, DomainError
from .masks import iso_parameter_width, iso_wpn_width
from .model import ModelConfig, TransformerModel, build_model
from .optim import SGD, AdamW, ScheduleSpec, schedule_multiplier
from .parameterization import BaseHyperparams, ParamScheme

# a run is flagged diverged once its loss exceeds the initial loss by this
# margin (or stops being finite); training stops early at that point
DIVERGENCE_MARGIN = 10.0

RUNS_COLUMNS = ["kind", "scheme", "width", "density", "lr", "init_std",
                "seed", "step", "loss", "diverged"]
FINALS_COLUMNS = ["kind", "scheme", "width", "density", "lr", "init_std",
                  "seed", "steps", "final_loss", "val_loss", "diverged",
                  "wall_time"]
OPTIMA_COLUMNS = ["kind", "scheme", "width", "density", "grid", "best_value",
                  "best_metric", "n_seeds"]


@dataclass
class RunRecord:
    """Everything one training run produced, ready for CSV or assertions.

    config holds the fully resolved key/value map (every default explicit),
    so rerun_record can reproduce the run bit-for-bit from the record alone.
    """

    kind: str
    scheme: str
    width: int
    density: float
    lr: float          # base learning rate this run used
    init_std: float    # base init std this run used
    seed: int
    config: dict = field(default_factory=dict)
    losses: list[float] = field(default_factory=list)
    layer_stats: list = field(default_factory=list)
    final_loss: float = math.nan
    val_loss: float = math.nan
    diverged: bool = False
    wall_time: float = 0.0

    @property
    def steps_run(self) -> int:
        return len(self.losses)


@dataclass
class SweepResult:
    records: list[RunRecord]
    optima: list[dict]


def base_from_config(cfg: dict, lr: float | None = None,
                     init_std: float | None = None) -> BaseHyperparams:
    return BaseHyperparams(
        sigma_base=cfg["base.sigma"] if init_std is None else init_std,
        eta_base=cfg["base.eta"] if lr is None else lr,
        alpha_input=cfg["base.alpha_input"],
        alpha_output=cfg["base.alpha_output"],
        d_base=cfg["base.d_base"],
        rho_base=cfg["base.rho_base"],
    )


def model_config_from(cfg: dict, scheme: str | None = None,
                      width: int | None = None, density: float | None = None,
                      lr: float | None = None, init_std: float | None = None,
                      seed: int | None = None,
                      scale_density: float | None = None) -> ModelConfig:
    return ModelConfig(
        d_model=cfg["model.d_model"] if width is None else width,
        n_layers=cfg["model.n_layers"],
        d_head=cfg["model.d_head"],
        vocab_size=cfg["model.vocab_size"],
        seq_len=cfg["model.seq_len"],
        density=cfg["model.density"] if density is None else density,
        scheme=ParamScheme.parse(cfg["model.scheme"] if scheme is None else scheme),
        base=base_from_config(cfg, lr=lr, init_std=init_std),
        seed=cfg["train.seed"] if seed is None else seed,
        dtype=cfg["model.dtype"],
        scale_density=scale_density,
    )


def make_optimizer(cfg: dict, model: TransformerModel):
    kind = cfg["optimizer.kind"]
    if kind == "adamw":
        return AdamW(model.params(),
                     betas=(cfg["optimizer.beta1"], cfg["optimizer.beta2"]),
                     eps=cfg["optimizer.eps"],
                     weight_decay=cfg["optimizer.weight_decay"])
    if kind == "sgd":
        return SGD(model.params(), momentum=cfg["optimizer.momentum"])
    raise ConfigError(f"unknown optimizer.kind {kind!r}")


def evaluate(model: TransformerModel, corpus, batch_size: int, seq_len: int,
             n_batches: int) -> float:
    """Mean per-token loss over evenly spaced validation windows (no grads)."""
    total = 0.0
    count = 0
    for tokens, targets in validation_batches(corpus, batch_size, seq_len, n_batches):
        res = model.forward_loss(tokens, targets, collect_stats=False)
        total += res.loss.item() * tokens.size
        count += tokens.size
    return total / count if count else math.nan


@dataclass(frozen=True)
class DstSpec:
    method: str           # "rigl" or "gmp"
    update_interval: int
    drop_fraction: float
    final_sparsity: float
    end_step: int
    reset_moments: bool

    def __post_init__(self):
        if not (0.0 < self.drop_fraction < 1.0):
            raise ConfigError(
                f"dst.drop_fraction must be in (0, 1), got {self.drop_fraction}")
        if not (0.0 <= self.final_sparsity < 1.0):
            raise ConfigError(
                f"dst.final_sparsity must be in [0, 1), got {self.final_sparsity}")
        if self.update_interval < 1:
            raise ConfigError("dst.update_interval must be >= 1")

    @staticmethod
    def from_config(cfg: dict) -> "DstSpec":
        method = cfg["dst.method"]
        if method not in ("rigl", "gmp"):
            raise ConfigError(f"unknown dst.method {method!r}")
        return DstSpec(method=method,
                       update_interval=cfg["dst.update_interval"],
                       drop_fraction=cfg["dst.drop_fraction"],
                       final_sparsity=cfg["dst.final_sparsity"],
                       end_step=cfg["dst.end_step"],
                       reset_moments=bool(cfg["dst.reset_moments"]))


def _reset_moments_at(opt, p, flat_indices: np.ndarray) -> None:
    if flat_indices.size and hasattr(opt, "reset_moments"):
        pos = np.zeros(p.tensor.shape, dtype=bool)
        pos.reshape(-1)[flat_indices] = True
        opt.reset_moments(p, pos)


def _apply_rigl(model: TransformerModel, opt, trace: dict, spec: DstSpec) -> None:
    for p in model.hidden_params():
        dense_grad = trace[f"layer{p.layer}.{p.name.split('.')[-1]}.masked"].grad
        new_mask, dropped, grown = rigl_update(p.tensor.data, dense_grad,
                                               p.mask, spec.drop_fraction)
        p.set_mask(new_mask)
        if spec.reset_moments:
            _reset_moments_at(opt, p, np.concatenate([dropped, grown]))


def _apply_gmp(model: TransformerModel, opt, step: int, spec: DstSpec) -> None:
    target = gmp_target_sparsity(step, spec.end_step, spec.final_sparsity)
    for p in model.hidden_params():
        new_mask, pruned = magnitude_prune(p.tensor.data, p.mask, target)
        p.set_mask(new_mask)
        if spec.reset_moments:
            _reset_moments_at(opt, p, pruned)


def train_single(cfg: dict, scheme: str | None = None, width: int | None = None,
                 density: float | None = None, lr: float | None = None,
                 init_std: float | None = None, seed: int | None = None,
                 kind: str | None = None, corpus=None,
                 on_step=None) -> RunRecord:
    """Run one training job to completion (or divergence).

    Keyword overrides are folded into a resolved config first and everything
    is derived from that, so the returned record's config reruns identically.
    on_step(step, model, opt) fires after each optimizer step (read-only
    inspection hook; mutating state voids reproducibility).
    """
    resolved = dict(cfg)
    for key, value in (("model.scheme", scheme), ("model.d_model", width),
                       ("model.density", density), ("base.eta", lr),
                       ("base.sigma", init_std), ("train.seed", seed),
                       ("experiment.kind", kind)):
        if value is not None:
            resolved[key] = value
    kind = resolved["experiment.kind"]
    dst = DstSpec.from_config(resolved) if kind.startswith("dst") else None

    scale_density = None
    mc_density = None
    if dst is not None and dst.method == "gmp":
        # gradual pruning starts dense; the scheme scales for the end state
        scale_density = resolved["model.density"]
        mc_density = 1.0
    mc = model_config_from(resolved, density=mc_density,
                           scale_density=scale_density)
    record = RunRecord(kind=kind, scheme=mc.scheme.value, width=mc.d_model,
                       density=resolved["model.density"], lr=mc.base.eta_base,
                       init_std=mc.base.sigma_base, seed=mc.seed,
                       config=resolved)

    start = time.perf_counter()
    if corpus is None:
        corpus = load_corpus(resolved["data.corpus"])
    model = build_model(mc)
    opt = make_optimizer(resolved, model)
    steps = resolved["train.steps"]
    sched = ScheduleSpec(warmup_steps=min(resolved["schedule.warmup_steps"], steps),
                         total_steps=steps, kind=resolved["schedule.kind"])
    sampler = BatchSampler(corpus, resolved["train.batch_size"], mc.seq_len,
                           data_seed=resolved["data.seed"], seed_index=mc.seed)
    collect_stats = bool(resolved["train.collect_stats"])

    limit = None
    for step in range(steps):
        tokens, targets = sampler.next_batch()
        want_trace = (dst is not None and dst.method == "rigl"
                      and step > 0 and step % dst.update_interval == 0
                      and step < dst.end_step)
        with T.Tape() as tape:
            res = model.forward_loss(tokens, targets, collect_stats=collect_stats,
                                     want_trace=want_trace)
            loss = res.loss.item()
            if limit is None:
                limit = loss + DIVERGENCE_MARGIN
            record.losses.append(loss)
            if collect_stats:
                record.layer_stats.append(res.stats)
            if not math.isfinite(loss) or loss > limit:
                record.diverged = True
                break
            T.backward(res.loss, tape)
        opt.step(schedule_multiplier(sched, step))
        if want_trace:
            _apply_rigl(model, opt, res.trace, dst)
        if (dst is not None and dst.method == "gmp"
                and step % dst.update_interval == 0):
            _apply_gmp(model, opt, step, dst)
        opt.zero_grad()
        if on_step is not None:
            on_step(step, model, opt)

    if not record.diverged:
        record.final_loss = record.losses[-1] if record.losses else math.nan
        record.val_loss = evaluate(model, corpus, resolved["train.batch_size"],
                                   mc.seq_len, resolved["train.val_batches"])
    record.wall_time = time.perf_counter() - start
    return record


def rerun_record(record: RunRecord) -> RunRecord:
    """Replay a record from its resolved config (reproducibility contract)."""
    if not record.config:
        raise DomainError("record carries no resolved config")
    return train_single(record.config)


# -- sweep drivers -----------------------------------------------------------


def sweep_points(cfg: dict) -> list[tuple[str, int, float]]:
    """Expand (scheme, width, density) grid points for the configured family."""
    schemes = [str(s) for s in cfg["sweep.schemes"]]
    densities = [float(d) for d in cfg["sweep.densities"]]
    family = cfg["sweep.family"]
    points = []
    if family == "fixed-width":
        for scheme in schemes:
            for w in cfg["sweep.widths"]:
                for rho in densities:
                    points.append((scheme, int(w), rho))
    elif family in ("iso-wpn", "iso-parameter"):
        base_w = cfg["scale.base_width"]
        base_rho = cfg["scale.base_density"]
        head = cfg["scale.head_size"]
        pick = iso_wpn_width if family == "iso-wpn" else iso_parameter_width
        for scheme in schemes:
            for rho in densities:
                points.append((scheme, pick(base_w, base_rho, rho, head), rho))
    else:
        raise ConfigError(f"unknown sweep.family {family!r}")
    return points


def _grid_values(cfg: dict) -> tuple[str, list[float]]:
    if cfg["sweep.kind"] == "lr":
        return "lr", [2.0 ** float(e) for e in cfg["sweep.lr_exponents"]]
    if cfg["sweep.kind"] == "init":
        return "init", [2.0 ** float(e) for e in cfg["sweep.init_exponents"]]
    raise ConfigError(f"unknown sweep.kind {cfg['sweep.kind']!r}")


def select_optimum(records: list[RunRecord], grid: str = "lr",
                   select: str = "val") -> tuple[float, float]:
    """Best grid value by mean metric over seeds; ties go to the smaller value.

    Diverged runs count as +inf. Returns (best_value, best_mean_metric).
    """
    if select not in ("val", "train"):
        raise ConfigError(f"unknown selection metric {select!r}")
    by_value: dict[float, list[float]] = {}
    for r in records:
        key = r.lr if grid == "lr" else r.init_std
        metric = r.val_loss if select == "val" else r.final_loss
        if r.diverged or not math.isfinite(metric):
            metric = math.inf
        by_value.setdefault(key, []).append(metric)
    if not by_value:
        raise DomainError("no records to select an optimum from")
    best_value, best_mean = None, math.inf
    for value in sorted(by_value):
        mean = sum(by_value[value]) / len(by_value[value])
        if mean < best_mean:
            best_value, best_mean = value, mean
    if best_value is None:
        # every run diverged; smallest grid value stands in, flagged by inf
        best_value = min(by_value)
    return best_value, best_mean


def run_sweep(cfg: dict, kind: str | None = None, progress=None) -> SweepResult:
    """Grid sweep over (scheme, width, density) x grid value x seed.

    kind "dst-lr-sweep" (or any dst-prefixed kind) makes every cell train
    with the configured dynamic-sparsity method.
    """
    grid, values = _grid_values(cfg)
    seeds = [int(s) for s in cfg["train.seeds"]]
    points = sweep_points(cfg)
    kind = kind or f"{grid}-sweep"
    corpus = load_corpus(cfg["data.corpus"])

    records: list[RunRecord] = []
    optima: list[dict] = []
    for scheme, width, rho in points:
        curve: list[RunRecord] = []
        for value in values:
            for seed in seeds:
                kw = {"lr": value} if grid == "lr" else {"init_std": value}
                rec = train_single(cfg, scheme=scheme, width=width, density=rho,
                                   seed=seed, kind=kind, corpus=corpus, **kw)
                curve.append(rec)
                if progress is not None:
                    progress(rec)
        records.extend(curve)
        best_value, best_metric = select_optimum(curve, grid=grid,
                                                 select=cfg["sweep.select"])
        optima.append({"kind": kind, "scheme": scheme, "width": width,
                       "density": rho, "grid": grid, "best_value": best_value,
                       "best_metric": best_metric, "n_seeds": len(seeds)})
    return SweepResult(records=records, optima=optima)


# -- CSV sinks ---------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_runs_csv(path: str | Path, records: list[RunRecord],
                   log_every: int = 1) -> None:
    """Long-format per-step losses: one row per logged step of each run."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUNS_COLUMNS)
        for r in records:
            last = len(r.losses) - 1
            for step, loss in enumerate(r.losses):
                if step % log_every and step != last:
                    continue
                w.writerow([r.kind, r.scheme, r.width, _fmt(r.density),
                            _fmt(r.lr), _fmt(r.init_std), r.seed, step,
                            _fmt(loss), int(r.diverged)])


def write_finals_csv(path: str | Path, records: list[RunRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FINALS_COLUMNS)
        for r in records:
            w.writerow([r.kind, r.scheme, r.width, _fmt(r.density), _fmt(r.lr),
                        _fmt(r.init_std), r.seed, r.steps_run,
                        _fmt(r.final_loss), _fmt(r.val_loss), int(r.diverged),
                        _fmt(round(r.wall_time, 3))])


def write_optima_csv(path: str | Path, optima: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(OPTIMA_COLUMNS)
        for row in optima:
            w.writerow([row["kind"], row["scheme"], row["width"],
                        _fmt(row["density"]), row["grid"],
                        _fmt(row["best_value"]), _fmt(row["best_metric"]),
                        row["n_seeds"]])


def read_csv_rows(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
