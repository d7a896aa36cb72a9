"""Coordinate checks, init-time scaling tables and weight-update probes.

Three instruments, all emitting rows with the same CSV schema
(scheme, width, density, layer, block, step, seed, stat):

* coord_check: trains every (scheme, width, density) cell for a few AdamW
  steps on identical data and records block-output mean-abs per step. The
  headline number is the flatness ratio: max/min of the cell statistic over
  the grid at the final step. A scheme whose activations neither grow nor
  shrink across the grid is scale-correct.
* init_scaling_table: forward and backward statistics at initialization,
  no optimizer. The backward leg injects a synthetic unit-scale gradient at
  the block-stack output, so gradient magnitudes are comparable across
  widths regardless of the readout multiplier.
* delta_y_probe: a few AdamW steps on one frozen batch, then the induced
  output change |ΔY| = |X_frozen (ΔW ⊙ M)| per projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .corpus import BatchSampler, load_corpus
from .errors import DomainError
from .model import ModelConfig, build_model
from .optim import AdamW
from .parameterization import BaseHyperparams, ParamScheme

_PROBE_GRAD_DOMAIN = 0x70726F62  # "prob"

# which traced activation feeds each masked projection
PROJ_INPUT_KEY = {"wq": "attn_in", "wk": "attn_in", "wv": "attn_in",
                  "wo": "attn_ctx", "w_gate": "ffn_in", "w_up": "ffn_in",
                  "w_down": "ffn_act"}

DIAG_COLUMNS = ["scheme", "width", "density", "layer", "block", "step",
                "seed", "stat"]


@dataclass(frozen=True)
class CoordCheckPlan:
    """Grid and shape for a coordinate check (or init/probe table)."""

    schemes: tuple
    widths: tuple
    densities: tuple
    seeds: int = 10
    steps: int = 10
    # probe steps ramp the LR exactly like training would; a cold start at
    # peak LR drives every scheme to the edge of divergence in a few steps
    warmup_steps: int = 30
    n_layers: int = 2
    d_head: int = 64
    batch_size: int = 8
    seq_len: int = 128
    dtype: str = "float32"
    data_seed: int = 1234
    corpus: str = "builtin"
    base: BaseHyperparams = field(default_factory=BaseHyperparams)

    def __post_init__(self):
        if not self.schemes:
            raise DomainError("plan needs at least one scheme")
        if len(self.widths) < 2 and len(self.densities) < 2:
            raise DomainError(
                "plan needs at least two widths or two densities to compare")
        if self.seeds < 1 or self.steps < 0 or self.warmup_steps < 0:
            raise DomainError("seeds must be >= 1, steps and warmup >= 0")

    def lr_multiplier(self, step: int) -> float:
        if self.warmup_steps == 0:
            return 1.0
        return min((step + 1) / self.warmup_steps, 1.0)

    def cells(self):
        for scheme in self.schemes:
            for width in self.widths:
                for rho in self.densities:
                    yield scheme, int(width), float(rho)

    def model_config(self, scheme: str, width: int, rho: float,
                     seed: int) -> ModelConfig:
        return ModelConfig(d_model=width, n_layers=self.n_layers,
                           d_head=self.d_head, seq_len=self.seq_len,
                           density=rho, scheme=ParamScheme.parse(scheme),
                           base=self.base, seed=seed, dtype=self.dtype)


@dataclass
class CoordCheckReport:
    rows: list[dict]
    diverged: list[tuple]
    flatness: dict          # scheme -> max/min over grid cells at final step
    flatness_detail: dict   # (scheme, layer, block) -> same ratio, unpooled

    def cell_stat(self, scheme: str, width: int, density: float, step: int,
                  blocks=("attn", "ffn")) -> float:
        """Mean stat over seeds, layers and the chosen blocks for one cell."""
        vals = [r["stat"] for r in self.rows
                if r["scheme"] == scheme and r["width"] == width
                and r["density"] == density and r["step"] == step
                and r["block"] in blocks]
        if not vals:
            raise DomainError(f"no rows for cell {(scheme, width, density, step)}")
        return float(np.mean(vals))

    def summary(self) -> dict:
        """(scheme, width, density, layer, step) -> (mean, std) over seeds,
        attention and feed-forward block statistics pooled."""
        acc: dict = {}
        for r in self.rows:
            key = (r["scheme"], r["width"], r["density"], r["layer"], r["step"])
            acc.setdefault(key, []).append(r["stat"])
        return {k: (float(np.mean(v)), float(np.std(v))) for k, v in acc.items()}


def _row(scheme, width, density, layer, block, step, seed, stat) -> dict:
    return {"scheme": scheme, "width": width, "density": density,
            "layer": layer, "block": block, "step": step, "seed": seed,
            "stat": float(stat)}


def coord_check(plan: CoordCheckPlan, progress=None) -> CoordCheckReport:
    """Short AdamW runs over the grid; block-output scale per step.

    Every cell sees the same token stream for a given seed index, so grid
    differences come from the parameterization, not the data. Step t rows
    hold statistics of the forward pass made after t optimizer steps; a
    non-finite loss flags the cell diverged and stops it early.
    """
    corpus = load_corpus(plan.corpus)
    rows: list[dict] = []
    diverged: list[tuple] = []
    for scheme, width, rho in plan.cells():
        for seed in range(plan.seeds):
            mc = plan.model_config(scheme, width, rho, seed)
            model = build_model(mc)
            opt = AdamW(model.params())
            sampler = BatchSampler(corpus, plan.batch_size, plan.seq_len,
                                   data_seed=plan.data_seed, seed_index=seed)
            ok = True
            for step in range(plan.steps + 1):
                tokens, targets = sampler.next_batch()
                with T.Tape() as tape:
                    res = model.forward_loss(tokens, targets, collect_stats=True)
                    loss = res.loss.item()
                    if not math.isfinite(loss):
                        diverged.append((scheme, width, rho, seed, step))
                        ok = False
                        break
                    for li, st in enumerate(res.stats):
                        rows.append(_row(scheme, width, rho, li, "attn", step,
                                         seed, st["attn_res"]))
                        rows.append(_row(scheme, width, rho, li, "ffn", step,
                                         seed, st["ffn_res"]))
                    if step == plan.steps:
                        break  # final measurement forward, no more updates
                    T.backward(res.loss, tape)
                opt.step(plan.lr_multiplier(step))
                opt.zero_grad()
            if progress is not None:
                progress(scheme, width, rho, seed, ok)
    flatness, detail = _flatness(rows, plan, step=plan.steps)
    return CoordCheckReport(rows=rows, diverged=diverged, flatness=flatness,
                            flatness_detail=detail)


def _flatness(rows: list[dict], plan: CoordCheckPlan, step: int):
    """Max/min of the cell statistic over the (width, density) grid.

    The headline ratio treats one grid cell as one number: the final-step
    statistic averaged over seeds, layers and blocks. The detail dict keeps
    the same ratio split per (layer, block) for drift hunting.
    """
    acc: dict = {}
    fine: dict = {}
    for r in rows:
        if r["step"] != step:
            continue
        cell = (r["scheme"], r["width"], r["density"])
        acc.setdefault(cell, []).append(r["stat"])
        fine.setdefault(cell + (r["layer"], r["block"]), []).append(r["stat"])

    def ratio_over_cells(values):
        lo, hi = min(values), max(values)
        return math.inf if lo <= 0 else hi / lo

    by_scheme: dict = {}
    for (scheme, _, _), vals in acc.items():
        by_scheme.setdefault(scheme, []).append(float(np.mean(vals)))
    flatness = {s: ratio_over_cells(v) for s, v in by_scheme.items()}

    by_detail: dict = {}
    for (scheme, _, _, layer, block), vals in fine.items():
        by_detail.setdefault((scheme, layer, block), []).append(float(np.mean(vals)))
    detail_ratio = {k: ratio_over_cells(v) for k, v in by_detail.items()}
    return flatness, detail_ratio


# -- init-time scaling table ---------------------------------------------------


def init_scaling_table(plan: CoordCheckPlan, progress=None) -> list[dict]:
    """Step-0 forward/backward statistics per layer, no optimizer.

    Forward rows (block column): attn_first / ffn_first are the mean-abs of
    the first masked projections of each block (Q,K,V and gate,up), the
    point where exactly one masked matmul separates the statistic from the
    block input; attn_out / ffn_out / attn_res / ffn_res follow the rest of
    the block. Backward rows: grad_in is the mean-abs gradient of the
    residual stream entering the block, grad_attn_ctx / grad_ffn_act the
    gradients one masked matmul upstream of the block output. The gradient
    source is a synthetic unit-scale tensor injected at the stack output, so
    readout multipliers cannot skew cross-width comparisons.
    """
    corpus = load_corpus(plan.corpus)
    rows: list[dict] = []
    for scheme, width, rho in plan.cells():
        for seed in range(plan.seeds):
            mc = plan.model_config(scheme, width, rho, seed)
            model = build_model(mc)
            sampler = BatchSampler(corpus, plan.batch_size, plan.seq_len,
                                   data_seed=plan.data_seed, seed_index=seed)
            tokens, targets = sampler.next_batch()
            with T.Tape() as tape:
                res = model.forward_loss(tokens, targets, collect_stats=True,
                                         want_trace=True)
                stack_out = res.trace["stack_out"]
                g = _probe_gradient(stack_out.shape, seed, stack_out.data.dtype)
                probe_loss = T.tsum(T.mul(stack_out, T.Tensor(g)))
                T.backward(probe_loss, tape)
            for li, st in enumerate(res.stats):
                for name in ("attn_first", "ffn_first", "attn_out", "ffn_out",
                             "attn_res", "ffn_res"):
                    rows.append(_row(scheme, width, rho, li, name, 0, seed,
                                     st[name]))
                rows.append(_row(scheme, width, rho, li, "grad_in", 0, seed,
                                 _mean_abs_grad(res.trace[f"layer{li}.block_in"])))
                rows.append(_row(scheme, width, rho, li, "grad_attn_ctx", 0,
                                 seed,
                                 _mean_abs_grad(res.trace[f"layer{li}.attn_ctx"])))
                rows.append(_row(scheme, width, rho, li, "grad_ffn_act", 0,
                                 seed,
                                 _mean_abs_grad(res.trace[f"layer{li}.ffn_act"])))
            if progress is not None:
                progress(scheme, width, rho, seed, True)
    return rows


def _probe_gradient(shape, seed: int, dtype) -> np.ndarray:
    ss = np.random.SeedSequence((_PROBE_GRAD_DOMAIN, seed))
    return np.random.default_rng(ss).standard_normal(shape).astype(dtype)


def _mean_abs_grad(tensor: T.Tensor) -> float:
    if tensor.grad is None:
        raise DomainError(f"no gradient recorded on {tensor.name or 'tensor'}")
    return float(np.abs(tensor.grad).mean())


def summarize_cells(rows: list[dict], block: str, step: int = 0) -> dict:
    """(scheme, width, density) -> stat averaged over seeds and layers."""
    acc: dict = {}
    for r in rows:
        if r["block"] != block or r["step"] != step:
            continue
        acc.setdefault((r["scheme"], r["width"], r["density"]), []).append(r["stat"])
    return {k: float(np.mean(v)) for k, v in acc.items()}


# -- ΔY probe -------------------------------------------------------------------


def delta_y_probe(plan: CoordCheckPlan, progress=None) -> list[dict]:
    """Mean |ΔY| per masked projection after plan.steps AdamW updates.

    One batch is frozen per seed; its per-projection input activations X and
    the initial weights are captured, the model trains plan.steps times on
    that same batch, and ΔY = X ((W_after - W_before) ⊙ M). Rows carry the
    projection name in the block column and plan.steps in the step column.
    Zero steps yields exactly zero. Diverged cells emit stat = nan rows.
    """
    corpus = load_corpus(plan.corpus)
    rows: list[dict] = []
    for scheme, width, rho in plan.cells():
        for seed in range(plan.seeds):
            mc = plan.model_config(scheme, width, rho, seed)
            model = build_model(mc)
            opt = AdamW(model.params())
            sampler = BatchSampler(corpus, plan.batch_size, plan.seq_len,
                                   data_seed=plan.data_seed, seed_index=seed)
            tokens, targets = sampler.next_batch()

            res = model.forward_loss(tokens, targets, collect_stats=False,
                                     want_trace=True)
            frozen_x = {}
            before = {}
            for p in model.hidden_params():
                name = p.name.split(".")[-1]
                key = f"layer{p.layer}.{PROJ_INPUT_KEY[name]}"
                frozen_x[p.name] = res.trace[key].data.copy()
                before[p.name] = p.tensor.data.copy()

            ok = True
            for step in range(plan.steps):
                with T.Tape() as tape:
                    res2 = model.forward_loss(tokens, targets,
                                              collect_stats=False)
                    if not math.isfinite(res2.loss.item()):
                        ok = False
                        break
                    T.backward(res2.loss, tape)
                opt.step(plan.lr_multiplier(step))
                opt.zero_grad()

            for p in model.hidden_params():
                name = p.name.split(".")[-1]
                if ok:
                    dw = (p.tensor.data - before[p.name]) * \
                        p.mask_tensor.data
                    dy = frozen_x[p.name] @ dw
                    stat = float(np.abs(dy).mean())
                else:
                    stat = math.nan
                rows.append(_row(scheme, width, rho, p.layer, name,
                                 plan.steps, seed, stat))
            if progress is not None:
                progress(scheme, width, rho, seed, ok)
    return rows


# -- CSV ------------------------------------------------------------------------


def write_diag_csv(path, rows: list[dict]) -> None:
    import csv
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAG_COLUMNS)
        for r in rows:
            w.writerow([r["scheme"], r["width"], repr(float(r["density"])),
                        r["layer"], r["block"], r["step"], r["seed"],
                        repr(float(r["stat"]))])
