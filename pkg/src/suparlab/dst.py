"""Dynamic sparse training: drop/grow mask updates and gradual pruning.

Two methods operate on the same static-mask machinery:

* rigl_update: drop the smallest-magnitude active weights and grow the same
  number of inactive positions with the largest dense-gradient magnitude, so
  the active count never changes. Grown weights start at zero.
* gradual magnitude pruning: a cubic sparsity schedule (gmp_target_sparsity)
  plus magnitude_prune, which keeps only the strongest active weights.

All tie-breaks are deterministic (lowest flat index wins), so repeated runs
produce identical masks. Callers are expected to reset optimizer moments at
every position whose mask bit changed; the update functions return the
affected indices for exactly that purpose.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, DomainError
from .masks import SparsityMask, mask_from_bits


def drop_grow_bits(weight: np.ndarray, grad_dense: np.ndarray, bits: np.ndarray,
                   drop_fraction: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Array-level drop/grow; returns (new_bits, dropped_idx, grown_idx).

    Drops k = floor(drop_fraction * n_active) active positions with the
    smallest |weight| and grows k inactive positions with the largest dense
    |gradient|. k is capped by the number of inactive positions so the active
    count is always preserved exactly. Index arrays are flat (C order).
    """
    weight = np.asarray(weight)
    grad_dense = np.asarray(grad_dense)
    bits = np.asarray(bits)
    if weight.shape != bits.shape or grad_dense.shape != bits.shape:
        raise DomainError("weight, gradient and mask shapes must match")
    if not (0.0 <= drop_fraction < 1.0):
        raise DomainError(f"drop_fraction must be in [0, 1), got {drop_fraction}")

    flat_bits = bits.reshape(-1)
    active = flat_bits == 1
    n_active = int(active.sum())
    n_inactive = flat_bits.size - n_active
    k = min(int(np.floor(drop_fraction * n_active)), n_inactive)
    if k == 0:
        return bits.copy(), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)

    drop_key = np.where(active, np.abs(weight.reshape(-1)), np.inf)
    dropped = np.argsort(drop_key, kind="stable")[:k]

    grow_key = np.where(active, np.inf, -np.abs(grad_dense.reshape(-1)))
    grown = np.argsort(grow_key, kind="stable")[:k]

    new_flat = flat_bits.copy()
    new_flat[dropped] = 0
    new_flat[grown] = 1
    new_bits = new_flat.reshape(bits.shape)
    if int(new_bits.sum()) != n_active:
        raise DomainError("drop/grow changed the active count")  # pragma: no cover
    return new_bits, dropped.astype(np.int64), grown.astype(np.int64)


def rigl_update(weights: np.ndarray, dense_grads: np.ndarray, mask: SparsityMask,
                drop_fraction: float) -> tuple[SparsityMask, np.ndarray, np.ndarray]:
    """One RigL step; returns (new_mask, dropped_idx, grown_idx).

    dense_grads must be the gradient of the unmasked weight (the grow
    criterion looks at positions the mask currently zeroes out). Density is
    preserved exactly. The caller zeroes grown weights (set_mask does) and
    resets optimizer moments at both dropped and grown indices.
    """
    new_bits, dropped, grown = drop_grow_bits(weights, dense_grads, mask.bits,
                                              drop_fraction)
    return mask_from_bits(new_bits, seed=mask.seed), dropped, grown


def gmp_target_sparsity(step: int, end_step: int, final_sparsity: float,
                        begin_step: int = 0) -> float:
    """Cubic pruning schedule: s_t = s_f * (1 - (1 - t/t_end)^3).

    Zero at and before begin_step, final_sparsity at and after end_step.
    """
    if not (0.0 <= final_sparsity < 1.0):
        raise DomainError(f"final_sparsity must be in [0, 1), got {final_sparsity}")
    if end_step <= begin_step:
        raise DomainError("end_step must exceed begin_step")
    if step <= begin_step:
        return 0.0
    if step >= end_step:
        return final_sparsity
    frac = (step - begin_step) / (end_step - begin_step)
    return final_sparsity * (1.0 - (1.0 - frac) ** 3)


def gmp_keep_count(numel: int, target_sparsity: float) -> int:
    """Active count the schedule demands: round((1 - s_t) * numel)."""
    if not (0.0 <= target_sparsity < 1.0):
        raise DomainError(f"target_sparsity must be in [0, 1), got {target_sparsity}")
    return int(round((1.0 - target_sparsity) * numel))


def keep_topk_bits(weight: np.ndarray, bits: np.ndarray, n_keep: int) -> np.ndarray:
    """Bit array keeping the n_keep largest-|weight| active positions.

    Ties at the keep boundary resolve to the lowest flat index. n_keep equal
    to the active count returns the bits unchanged (idempotence).
    """
    weight = np.asarray(weight)
    bits = np.asarray(bits)
    if weight.shape != bits.shape:
        raise DomainError("weight and mask shapes must match")
    flat_bits = bits.reshape(-1)
    n_active = int((flat_bits == 1).sum())
    if n_keep == n_active:
        return bits.copy()
    keep_key = np.where(flat_bits == 1, -np.abs(weight.reshape(-1)), np.inf)
    kept = np.argsort(keep_key, kind="stable")[:n_keep]
    new_flat = np.zeros_like(flat_bits)
    new_flat[kept] = 1
    return new_flat.reshape(bits.shape)


def magnitude_prune(weights: np.ndarray, mask: SparsityMask,
                    target_sparsity: float) -> tuple[SparsityMask, np.ndarray]:
    """Prune the weakest active weights down to the target sparsity.

    Returns (new_mask, pruned flat indices). Pruning only removes: a target
    that would require growing (fewer active than the schedule asks to keep)
    is a contract violation. Equal counts return the mask unchanged.
    """
    n_keep = gmp_keep_count(mask.bits.size, target_sparsity)
    n_active = mask.n_ones
    if n_keep > n_active:
        raise ContractViolation(
            f"magnitude_prune cannot grow: target keeps {n_keep} of "
            f"{mask.bits.size} but only {n_active} are active")
    new_bits = keep_topk_bits(weights, mask.bits, n_keep)
    pruned = np.flatnonzero((mask.bits.reshape(-1) == 1)
                            & (new_bits.reshape(-1) == 0)).astype(np.int64)
    return mask_from_bits(new_bits, seed=mask.seed), pruned
