"""suparlab: a desk-scale laboratory for sparsity-aware parameterization.

Implements the SP / MUP / SUPAR scaling rules (plus ablation variants), masked
byte-level GPT-style transformers on a small numpy autodiff engine, analytic
and Monte-Carlo variance oracles, coordinate checks, and LR/init sweep
harnesses with a CLI.
"""

from .config import default_config, dump_config, load_config
from .diagnostics import (CoordCheckPlan, coord_check, delta_y_probe,
                          init_scaling_table)
from .dst import gmp_target_sparsity, magnitude_prune, rigl_update
from .errors import (ConfigError, ContractViolation, DegenerateMaskError,
                     DomainError, ShapeError, SuparlabError,
                     UnsupportedPrimitive)
from .harness import (RunRecord, rerun_record, run_sweep, select_optimum,
                      train_single)
from .masks import (ScalingPoint, SparsityMask, iso_parameter_width,
                    iso_wpn_width, mask_stats, sample_random_mask)
from .model import ModelConfig, TransformerModel, build_model
from .optim import SGD, AdamW, ScheduleSpec, schedule_multiplier
from .oracles import (McEstimate, analytic_forward_var, mc_adam_delta_y,
                      mc_backward_var, mc_forward_var, mc_sgd_delta_y,
                      run_oracle_suite)
from .parameterization import (BaseHyperparams, LayerRole, ParamScheme,
                               attn_logit_scale, forward_multiplier, init_std,
                               layer_lr, scaling_table)
from .tensor import Tape, Tensor, apply_primitive, backward, grad_check

__version__ = "0.1.0"

__all__ = [
    "AdamW", "BaseHyperparams", "ConfigError", "ContractViolation",
    "CoordCheckPlan", "DegenerateMaskError", "DomainError", "LayerRole",
    "McEstimate", "ModelConfig", "ParamScheme", "RunRecord", "SGD",
    "ScalingPoint", "ScheduleSpec", "ShapeError", "SparsityMask",
    "SuparlabError", "Tape", "Tensor", "TransformerModel",
    "UnsupportedPrimitive", "analytic_forward_var", "apply_primitive",
    "attn_logit_scale", "backward", "build_model", "coord_check",
    "default_config", "delta_y_probe", "dump_config", "forward_multiplier",
    "gmp_target_sparsity", "grad_check", "init_scaling_table", "init_std",
    "iso_parameter_width", "iso_wpn_width", "layer_lr", "load_config",
    "magnitude_prune", "mask_stats", "mc_adam_delta_y", "mc_backward_var",
    "mc_forward_var", "mc_sgd_delta_y", "rerun_record", "rigl_update",
    "run_oracle_suite", "run_sweep", "sample_random_mask", "scaling_table",
    "schedule_multiplier", "select_optimum", "train_single",
]
