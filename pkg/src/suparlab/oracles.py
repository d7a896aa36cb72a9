"""Monte-Carlo and analytic oracles for the masked-layer scaling rules.

These deliberately avoid the autodiff engine and the model: every estimate
comes from direct summation over freshly sampled Gaussian weights, Gaussian
activations and exact-count masks. They serve as independent ground truth for
three facts the parameterization relies on:

  forward   Var(Y)      = d_in  * rho * var_W * (Var X + E[X]^2)
  backward  Var(dL/dX)  = d_out * rho * var_W * Var(dL/dY)
  Adam      E|dY|  ~  eta * d_in * rho      (sign-like normalized update)
  SGD       E|dY|  ~  eta * rho             (update carries 1/d_in itself)

Estimates are chunked and each chunk gets its own child seed, so a parallel
evaluation would reproduce the serial result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

MIN_SAMPLES = 10_000
_CHUNK_TARGET = 2_000_000  # elements per chunk buffer, keeps memory modest

# E|N(0,1)| — the half-normal mean, exact constant in the Adam/SGD references
HALF_NORMAL_MEAN = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class McEstimate:
    """Sample mean/variance plus standard errors for both.

    standard_error is the usual SE of the mean. variance_standard_error is
    the asymptotic SE of the sample variance, sqrt((m4 - var^2)/n) with m4
    the fourth central moment; Var(Y) comparisons need it because Y is a
    masked product sum, not Gaussian.
    """

    mean: float
    variance: float
    standard_error: float
    variance_standard_error: float
    samples: int

    def __post_init__(self):
        if self.samples < MIN_SAMPLES:
            raise DomainError(
                f"estimate needs >= {MIN_SAMPLES} samples, got {self.samples}")


def _estimate_from(values: np.ndarray) -> McEstimate:
    n = values.size
    mean = float(values.mean())
    centered = values - mean
    var = float((centered * centered).sum() / (n - 1))
    m4 = float((centered ** 4).mean())
    se_mean = math.sqrt(var / n)
    se_var = math.sqrt(max(m4 - var * var, 0.0) / n)
    return McEstimate(mean=mean, variance=var, standard_error=se_mean,
                      variance_standard_error=se_var, samples=n)


def _check_common(fan: int, rho: float, samples: int):
    if fan < 1:
        raise DomainError("fan size must be >= 1")
    if not (0.0 < rho <= 1.0):
        raise DomainError(f"rho must be in (0, 1], got {rho}")
    if samples < MIN_SAMPLES:
        raise DomainError(f"samples must be >= {MIN_SAMPLES}, got {samples}")
    k = int(round(rho * fan))
    if k < 1:
        raise DomainError(f"rho*fan rounds to zero active positions ({rho}*{fan})")
    return k


def _chunks(samples: int, per_sample_elems: int):
    chunk = max(1, min(samples, _CHUNK_TARGET // max(per_sample_elems, 1)))
    starts = range(0, samples, chunk)
    return [(min(chunk, samples - s)) for s in starts]


def analytic_forward_var(d_in: int, rho: float, sigma2_w: float,
                         var_x: float, mean_x: float) -> float:
    """d_in * rho * sigma2_w * (var_x + mean_x^2); the forward scaling law."""
    if d_in < 1:
        raise DomainError("d_in must be >= 1")
    if not (0.0 < rho <= 1.0):
        raise DomainError(f"rho must be in (0, 1], got {rho}")
    if sigma2_w < 0 or var_x < 0:
        raise DomainError("variances must be nonnegative")
    return d_in * rho * sigma2_w * (var_x + mean_x * mean_x)


def mc_forward_var(d_in: int, rho: float, sigma_w: float, x_mean: float,
                   x_std: float, samples: int, seed: int) -> McEstimate:
    """Empirical Var(Y) for Y = sum_i (W ⊙ M)_i X_i over one fan-in.

    Each sample sums k = round(rho*d_in) products of fresh N(0, sigma_w)
    weights and fresh N(x_mean, x_std) inputs. Which k of the d_in positions
    an exact-count mask activates is irrelevant here: weights and inputs are
    IID over positions, so the sum over any k positions has the same
    distribution, and only the k active products are generated.
    """
    k = _check_common(d_in, rho, samples)
    root = np.random.SeedSequence(seed)
    sizes = _chunks(samples, 2 * k)
    children = root.spawn(len(sizes))
    out = np.empty(samples, dtype=np.float64)
    pos = 0
    for size, child in zip(sizes, children):
        rng = np.random.default_rng(child)
        x = rng.standard_normal((size, k)) * x_std + x_mean
        w = rng.standard_normal((size, k)) * sigma_w
        out[pos:pos + size] = (x * w).sum(axis=1)
        pos += size
    return _estimate_from(out)


def mc_backward_var(d_out: int, rho: float, sigma_w: float, gy_std: float,
                    samples: int, seed: int) -> McEstimate:
    """Empirical Var(dL/dX_i) = Var(sum_j (W ⊙ M)_ij dL/dY_j).

    The synthetic output gradient is drawn independent of W, matching the
    independence simplification the backward law is stated under. As in the
    forward oracle, only the k active products are generated.
    """
    k = _check_common(d_out, rho, samples)
    root = np.random.SeedSequence(seed)
    sizes = _chunks(samples, 2 * k)
    children = root.spawn(len(sizes))
    out = np.empty(samples, dtype=np.float64)
    pos = 0
    for size, child in zip(sizes, children):
        rng = np.random.default_rng(child)
        gy = rng.standard_normal((size, k)) * gy_std
        w = rng.standard_normal((size, k)) * sigma_w
        out[pos:pos + size] = (gy * w).sum(axis=1)
        pos += size
    return _estimate_from(out)


def mc_adam_delta_y(d_in: int, rho: float, eta: float, steps: int, batch: int,
                    samples: int, seed: int,
                    betas: tuple[float, float] = (0.9, 0.95)) -> McEstimate:
    """Mean |ΔY| element after `steps` Adam updates on a synthetic stream.

    Per sample: one input X (reused every step, the correlation model), a
    fresh scalar output-gradient per step and batch element, gradients
    g_i = mean_b X_ib * gy_b, moment updates with bias correction, and the
    sign-like normalized step m_hat/(sqrt(v_hat) + tiny). ΔY sums X_i ΔW_i
    over the k = round(rho*d_in) active positions.

    For steps=1, batch=1 this reduces exactly to |ΔY| = eta * sum_i |X_i|,
    whose mean is eta * k * sqrt(2/pi) — the proportionality reference.
    """
    k = _check_common(d_in, rho, samples)
    if steps < 1:
        raise DomainError("steps must be >= 1")
    if batch < 1:
        raise DomainError("batch must be >= 1")
    if eta <= 0:
        raise DomainError("eta must be positive")
    b1, b2 = betas
    tiny = 1e-12
    root = np.random.SeedSequence(seed)
    sizes = _chunks(samples, k * (batch + steps))
    children = root.spawn(len(sizes))
    out = np.empty(samples, dtype=np.float64)
    pos = 0
    for size, child in zip(sizes, children):
        rng = np.random.default_rng(child)
        x = rng.standard_normal((size, k, batch))
        m = np.zeros((size, k))
        v = np.zeros((size, k))
        dw = np.zeros((size, k))
        for t in range(1, steps + 1):
            gy = rng.standard_normal((size, 1, batch))
            g = (x * gy).mean(axis=2)
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1 ** t)
            v_hat = v / (1.0 - b2 ** t)
            dw -= eta * m_hat / (np.sqrt(v_hat) + tiny)
        # ΔY on the first batch element's input (the frozen probe batch)
        out[pos:pos + size] = np.abs((x[:, :, 0] * dw).sum(axis=1))
        pos += size
    return _estimate_from(out)


def mc_sgd_delta_y(d_in: int, rho: float, eta: float, samples: int,
                   seed: int) -> McEstimate:
    """Mean |ΔY| element after one scaled-SGD update, ΔW_i = -(eta/d_in) g_i.

    With g_i = X_i * gy this gives |ΔY| = (eta/d_in) |gy| sum_i X_i^2 over
    the active fan-in, whose mean is eta * rho * sqrt(2/pi): width drops out
    because the update formulation carries the 1/d_in factor itself.
    """
    k = _check_common(d_in, rho, samples)
    if eta <= 0:
        raise DomainError("eta must be positive")
    root = np.random.SeedSequence(seed)
    sizes = _chunks(samples, k)
    children = root.spawn(len(sizes))
    out = np.empty(samples, dtype=np.float64)
    pos = 0
    for size, child in zip(sizes, children):
        rng = np.random.default_rng(child)
        x = rng.standard_normal((size, k))
        gy = rng.standard_normal((size, 1))
        out[pos:pos + size] = np.abs((eta / d_in) * gy[:, 0]
                                     * (x * x).sum(axis=1))
        pos += size
    return _estimate_from(out)


# -- oracle suite -------------------------------------------------------------

SUITE_WIDTHS = (64, 256, 1024)
SUITE_DENSITIES = (1.0, 0.25, 0.0625)


def run_oracle_suite(samples: int = 1_000_000, seed: int = 7,
                     eta_base: float = 1.62e-2, d_base: int = 256,
                     rho_base: float = 1.0) -> list[dict]:
    """Full comparison table over the acceptance grid; returns CSV-ready rows.

    forward/backward rows use sigma_w = 1/sqrt(d*rho) so the analytic value
    is exactly 1.0; pass means within 3 variance standard errors. adam rows
    scale eta by the 1/(m_d*m_rho) rule and sgd rows by 1/m_rho, so each
    family's analytic reference is one constant; pass means within 10%.
    """
    rows: list[dict] = []
    for d in SUITE_WIDTHS:
        for rho in SUITE_DENSITIES:
            point = f"d={d},rho={rho:g}"
            sigma_w = 1.0 / math.sqrt(d * rho)

            est = mc_forward_var(d, rho, sigma_w, 0.0, 1.0, samples, seed)
            analytic = analytic_forward_var(d, rho, sigma_w ** 2, 1.0, 0.0)
            rows.append(_row("forward_var", point, analytic, est.variance,
                             est.variance_standard_error,
                             abs(est.variance - analytic)
                             <= 3.0 * est.variance_standard_error))

            est = mc_backward_var(d, rho, sigma_w, 1.0, samples, seed + 1)
            rows.append(_row("backward_var", point, analytic, est.variance,
                             est.variance_standard_error,
                             abs(est.variance - analytic)
                             <= 3.0 * est.variance_standard_error))

            m_d = d / d_base
            m_rho = rho / rho_base
            eta = eta_base / (m_d * m_rho)
            est = mc_adam_delta_y(d, rho, eta, 1, 1, samples, seed + 2)
            analytic = eta * round(d * rho) * HALF_NORMAL_MEAN
            rows.append(_row("adam_delta_y", point, analytic, est.mean,
                             est.standard_error,
                             abs(est.mean / analytic - 1.0) <= 0.10))

            eta = eta_base / m_rho
            est = mc_sgd_delta_y(d, rho, eta, samples, seed + 3)
            analytic = eta * (round(d * rho) / d) * HALF_NORMAL_MEAN
            rows.append(_row("sgd_delta_y", point, analytic, est.mean,
                             est.standard_error,
                             abs(est.mean / analytic - 1.0) <= 0.10))

        # one nonzero-mean forward cell per width exercises the E[X]^2 term
        rho = 0.25
        sigma_w = 1.0 / math.sqrt(d * rho)
        est = mc_forward_var(d, rho, sigma_w, 1.0, 1.0, samples, seed + 4)
        analytic = analytic_forward_var(d, rho, sigma_w ** 2, 1.0, 1.0)
        rows.append(_row("forward_var_meanx", f"d={d},rho={rho:g},mean=1",
                         analytic, est.variance, est.variance_standard_error,
                         abs(est.variance - analytic)
                         <= 3.0 * est.variance_standard_error))
    return rows


def _row(quantity: str, point: str, analytic: float, mc_mean: float,
         mc_se: float, ok: bool) -> dict:
    return {"quantity": quantity, "grid_point": point, "analytic": analytic,
            "mc_mean": mc_mean, "mc_se": mc_se, "pass": int(bool(ok))}


def write_oracle_csv(path, rows: list[dict]) -> None:
    import csv
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "grid_point", "analytic", "mc_mean", "mc_se",
                    "pass"])
        for r in rows:
            w.writerow([r["quantity"], r["grid_point"], repr(float(r["analytic"])),
                        repr(float(r["mc_mean"])), repr(float(r["mc_se"])),
                        r["pass"]])
