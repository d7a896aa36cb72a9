"""Random unstructured static masks and sparsity-aware scaling geometry.

Masks are sampled with an exact nonzero count (round(density * numel) ones
placed uniformly over the whole tensor, not per column and not Bernoulli), so
per-column counts follow a hypergeometric law around d_in * density. A mask is
fully determined by (shape, density, seed) and is never stored bit-by-bit;
configs carry the quadruple and regenerate.

Also here: the two width/density trade-off calculators used by scaling
studies. Iso-parameter keeps width^2 * density fixed (same nonzero parameter
count); iso-WPN keeps width * density fixed (same nonzero fan-in per neuron).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMaskError, DomainError

HEAD_SIZE_DEFAULT = 64

# spawn-key domain tags so mask, weight and data streams never collide
_MASK_DOMAIN = 0x6D61736B  # "mask"

# sentinel seed for masks produced by dynamic-sparsity updates rather than
# sampling; such masks are not regenerable from their quadruple
DERIVED_MASK_SEED = -1


@dataclass(frozen=True)
class SparsityMask:
    """Static 0/1 mask over a (d_in, d_out) weight tensor."""

    shape: tuple[int, int]
    bits: np.ndarray = field(repr=False)
    density: float
    seed: int

    @property
    def n_ones(self) -> int:
        return int(self.bits.sum())

    def as_array(self, dtype=np.float64) -> np.ndarray:
        return self.bits.astype(dtype)


def mask_seed_for(config_seed: int, layer_index: int, tensor_tag: int) -> int:
    """Derive the per-tensor mask seed from the run seed.

    SeedSequence mixing instead of plain XOR so (layer, tag) pairs cannot
    collide; the derived integer is recorded on the mask and suffices to
    regenerate it.
    """
    ss = np.random.SeedSequence((_MASK_DOMAIN, config_seed, layer_index, tensor_tag))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_random_mask(d_in: int, d_out: int, density: float, seed: int) -> SparsityMask:
    """Exact-count uniform mask: round(density*numel) ones, deterministic in seed."""
    if not (0.0 < density <= 1.0):
        raise DomainError(f"mask density must be in (0, 1], got {density}")
    if d_in < 1 or d_out < 1:
        raise DomainError(f"mask shape must be positive, got ({d_in}, {d_out})")
    numel = d_in * d_out
    n_ones = int(round(density * numel))
    if n_ones < 1:
        raise DegenerateMaskError(
            f"density {density} on shape ({d_in}, {d_out}) rounds to zero nonzeros")
    bits = np.zeros(numel, dtype=np.uint8)
    if n_ones == numel:
        bits[:] = 1
    else:
        rng = np.random.default_rng(seed)
        idx = rng.choice(numel, size=n_ones, replace=False)
        bits[idx] = 1
    return SparsityMask(shape=(d_in, d_out), bits=bits.reshape(d_in, d_out),
                        density=density, seed=seed)


def mask_from_bits(bits: np.ndarray, seed: int = DERIVED_MASK_SEED) -> SparsityMask:
    """Wrap an explicit bit array (dynamic-sparsity updates produce these)."""
    bits = np.asarray(bits)
    if bits.ndim != 2:
        raise DomainError(f"mask bits must be 2-d, got shape {bits.shape}")
    bits = (bits != 0).astype(np.uint8)
    n_ones = int(bits.sum())
    if n_ones < 1:
        raise DegenerateMaskError("mask has zero nonzeros")
    return SparsityMask(shape=bits.shape, bits=bits,
                        density=n_ones / bits.size, seed=seed)


def mask_stats(mask: SparsityMask) -> dict:
    """Exact density plus per-column / per-row nonzero counts."""
    bits = mask.bits
    return {
        "density": float(bits.sum()) / bits.size,
        "per_column_counts": bits.sum(axis=0).tolist(),
        "per_row_counts": bits.sum(axis=1).tolist(),
    }


@dataclass(frozen=True)
class ScalingPoint:
    width: int
    density: float
    regime: str  # fixed-width | iso-parameter | iso-wpn

    def __post_init__(self):
        if self.regime not in ("fixed-width", "iso-parameter", "iso-wpn"):
            raise DomainError(f"unknown scaling regime {self.regime!r}")
        if not (0.0 < self.density <= 1.0):
            raise DomainError(f"density must be in (0, 1], got {self.density}")
        if self.width < 1:
            raise DomainError(f"width must be positive, got {self.width}")


def _check_densities(base_density: float, target_density: float):
    for rho in (base_density, target_density):
        if not (0.0 < rho <= 1.0):
            raise DomainError(f"density must be in (0, 1], got {rho}")


def iso_parameter_width(base_width: int, base_density: float, target_density: float,
                        head_size: int = HEAD_SIZE_DEFAULT) -> int:
    """Width (head-size multiple) minimizing |w^2*rho - base^2*rho_base|."""
    _check_densities(base_density, target_density)
    if base_width % head_size != 0:
        raise DomainError(f"base width {base_width} is not a multiple of head size {head_size}")
    target = base_width * base_width * base_density
    ideal = np.sqrt(target / target_density)
    lo = int(np.floor(ideal / head_size)) * head_size
    hi = lo + head_size
    candidates = [w for w in (lo, hi) if w >= head_size]
    if not candidates:
        raise DomainError(
            f"iso-parameter width for ({base_width}, {base_density} -> {target_density}) "
            f"falls below head size {head_size}")
    # ties go to the smaller width for determinism
    return min(candidates, key=lambda w: (abs(w * w * target_density - target), w))


def iso_wpn_width(base_width: int, base_density: float, target_density: float,
                  head_size: int = HEAD_SIZE_DEFAULT) -> int:
    """Width with width*density == base_width*base_density, head-size rounded.

    Raises a domain error carrying the rounding residual when the product
    cannot be preserved exactly.
    """
    _check_densities(base_density, target_density)
    if base_width % head_size != 0:
        raise DomainError(f"base width {base_width} is not a multiple of head size {head_size}")
    target = base_width * base_density
    ideal = target / target_density
    width = int(round(ideal / head_size)) * head_size
    if width < head_size:
        raise DomainError(
            f"iso-WPN width for ({base_width}, {base_density} -> {target_density}) "
            f"falls below head size {head_size}")
    residual = width * target_density - target
    if abs(residual) > 1e-9:
        raise DomainError(
            f"iso-WPN width not realizable at head-size {head_size}: nearest width {width} "
            f"gives width*density residual {residual:+.6g} (target {target:g})")
    return width


def iso_wpn_family(base_width: int, base_density: float, densities,
                   head_size: int = HEAD_SIZE_DEFAULT) -> list[ScalingPoint]:
    return [ScalingPoint(iso_wpn_width(base_width, base_density, rho, head_size), rho, "iso-wpn")
            for rho in densities]


def iso_parameter_family(base_width: int, base_density: float, densities,
                         head_size: int = HEAD_SIZE_DEFAULT) -> list[ScalingPoint]:
    return [ScalingPoint(iso_parameter_width(base_width, base_density, rho, head_size), rho,
                         "iso-parameter") for rho in densities]
