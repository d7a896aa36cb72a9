"""Per-layer init std, learning rate and forward multipliers for each scheme.

Five schemes are supported: standard parameterization (SP), maximal update
parameterization (MUP), its sparsity-aware extension (SUPAR), and two ablation
variants that apply only one of SUPAR's two corrections (init-only, LR-only).
The rules, relative to a tuned dense base model at width d_base and density
rho_base, with width multiplier m_d = d_model/d_base and density multiplier
m_rho = rho/rho_base:

                        SP          MUP                 SUPAR
  embedding init std    sigma       sigma               sigma
  hidden init std       sigma       sigma/sqrt(m_d)     sigma/sqrt(m_d*m_rho)
  embedding fwd mult    1           alpha_input         alpha_input
  unembedding fwd mult  1           alpha_output/m_d    alpha_output/m_d
  embedding LR (adam)   eta         eta                 eta
  hidden LR (adam)      eta         eta/m_d             eta/(m_d*m_rho)
  attention logits      1/sqrt(dh)  1/dh                1/dh

SUPAR collapses to MUP exactly when m_rho == 1.

SGD hidden LRs fold the 1/d_in factor of the scaled-SGD update formulation
into the emitted value (eta/(m_d*m_rho*d_base) for SUPAR, eta/(m_d*d_base) for
MUP, plain eta for SP), so a conventional SGD step reproduces the intended
update effect.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import DomainError


class ParamScheme(enum.Enum):
    SP = "sp"
    MUP = "mup"
    SUPAR = "supar"
    MUP_SUPAR_INIT_ONLY = "mup-supar-init-only"
    MUP_SUPAR_LR_ONLY = "mup-supar-lr-only"

    @classmethod
    def parse(cls, name: str) -> "ParamScheme":
        key = name.strip().lower().replace("_", "-")
        for scheme in cls:
            if scheme.value == key:
                return scheme
        raise DomainError(f"unknown scheme {name!r}; expected one of "
                          f"{[s.value for s in cls]}")


class LayerRole(enum.Enum):
    EMBEDDING = "embedding"
    HIDDEN = "hidden"
    UNEMBEDDING = "unembedding"
    VECTOR = "vector"


# schemes that carry the muP-style multipliers and 1/d_head attention scale
_MUP_FAMILY = {ParamScheme.MUP, ParamScheme.SUPAR,
               ParamScheme.MUP_SUPAR_INIT_ONLY, ParamScheme.MUP_SUPAR_LR_ONLY}

# schemes whose hidden init corrects for density; whose hidden LR corrects for density
_INIT_RHO_CORRECTED = {ParamScheme.SUPAR, ParamScheme.MUP_SUPAR_INIT_ONLY}
_LR_RHO_CORRECTED = {ParamScheme.SUPAR, ParamScheme.MUP_SUPAR_LR_ONLY}


@dataclass(frozen=True)
class BaseHyperparams:
    """Tuned hyperparameters of the dense base (proxy) model."""

    sigma_base: float = 0.08665602
    eta_base: float = 1.62e-2
    alpha_input: float = 9.1705
    alpha_output: float = 1.0951835
    d_base: int = 256
    rho_base: float = 1.0

    def __post_init__(self):
        for fname in ("sigma_base", "eta_base", "alpha_input", "alpha_output"):
            if getattr(self, fname) <= 0:
                raise DomainError(f"{fname} must be positive")
        if self.d_base < 1:
            raise DomainError("d_base must be positive")
        if not (0.0 < self.rho_base <= 1.0):
            raise DomainError("rho_base must be in (0, 1]")


def _check_multipliers(m_d: float, m_rho: float):
    if m_d <= 0:
        raise DomainError(f"width multiplier must be positive, got {m_d}")
    if not (0.0 < m_rho <= 1.0):
        raise DomainError(f"density multiplier must be in (0, 1], got {m_rho}")


def init_std(role: LayerRole, scheme: ParamScheme, base: BaseHyperparams,
             m_d: float, m_rho: float) -> float:
    """Standard deviation for zero-mean Gaussian init of a tensor's role.

    Vector tensors (norm gains) are initialized to 1, not sampled; the value
    returned for them is the nominal sigma_base and is unused by build_model.
    """
    _check_multipliers(m_d, m_rho)
    if role in (LayerRole.EMBEDDING, LayerRole.VECTOR, LayerRole.UNEMBEDDING):
        return base.sigma_base
    if scheme is ParamScheme.SP:
        return base.sigma_base
    if scheme in _INIT_RHO_CORRECTED:
        return base.sigma_base / math.sqrt(m_d * m_rho)
    return base.sigma_base / math.sqrt(m_d)


def layer_lr(role: LayerRole, scheme: ParamScheme, optimizer: str,
             base: BaseHyperparams, m_d: float, m_rho: float) -> float:
    """Peak learning rate for a tensor, before the step-schedule multiplier."""
    _check_multipliers(m_d, m_rho)
    if optimizer not in ("adam", "sgd"):
        raise DomainError(f"optimizer must be 'adam' or 'sgd', got {optimizer!r}")
    if role is not LayerRole.HIDDEN:
        return base.eta_base
    if optimizer == "adam":
        if scheme is ParamScheme.SP:
            return base.eta_base
        if scheme in _LR_RHO_CORRECTED:
            return base.eta_base / (m_d * m_rho)
        return base.eta_base / m_d
    # sgd: the scaled-update formulation's 1/d_in is folded in here
    if scheme is ParamScheme.SP:
        return base.eta_base
    if scheme in _LR_RHO_CORRECTED:
        return base.eta_base / (m_d * m_rho * base.d_base)
    return base.eta_base / (m_d * base.d_base)


def attn_logit_scale(scheme: ParamScheme, d_head: int) -> float:
    """Multiplier applied to raw q.k attention logits."""
    if d_head < 1:
        raise DomainError(f"d_head must be >= 1, got {d_head}")
    if scheme is ParamScheme.SP:
        return 1.0 / math.sqrt(d_head)
    return 1.0 / d_head


def forward_multiplier(role: LayerRole, scheme: ParamScheme,
                       base: BaseHyperparams, m_d: float) -> float:
    """Static multiplier on a role's forward contribution."""
    if m_d <= 0:
        raise DomainError(f"width multiplier must be positive, got {m_d}")
    if scheme is ParamScheme.SP or role in (LayerRole.HIDDEN, LayerRole.VECTOR):
        return 1.0
    if role is LayerRole.EMBEDDING:
        return base.alpha_input
    if role is LayerRole.UNEMBEDDING:
        return base.alpha_output / m_d
    return 1.0


def scaling_table(scheme: ParamScheme, base: BaseHyperparams,
                  d_model: int, density: float, d_head: int,
                  optimizer: str = "adam") -> str:
    """Human-readable role-by-quantity table for one model config."""
    m_d = d_model / base.d_base
    m_rho = density / base.rho_base
    rows = [
        f"scheme={scheme.value}  d_model={d_model} (m_d={m_d:g})  "
        f"density={density:g} (m_rho={m_rho:g})  optimizer={optimizer}",
        f"{'role':<12} {'init_std':>14} {'lr':>14} {'fwd_mult':>12}",
    ]
    for role in (LayerRole.EMBEDDING, LayerRole.HIDDEN, LayerRole.UNEMBEDDING,
                 LayerRole.VECTOR):
        rows.append(
            f"{role.value:<12} "
            f"{init_std(role, scheme, base, m_d, m_rho):>14.8g} "
            f"{layer_lr(role, scheme, optimizer, base, m_d, m_rho):>14.8g} "
            f"{forward_multiplier(role, scheme, base, m_d):>12.8g}")
    rows.append(f"{'attn logits':<12} scale={attn_logit_scale(scheme, d_head):.8g}")
    return "\n".join(rows)
