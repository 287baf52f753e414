"""Cost model and planner for compressed linear operators.

Parameter counts and multiply-add counts per operator kind, the matching
closed-form cost-reduction expressions, and a planner that enumerates every
valid configuration reaching a target reduction. All arithmetic is exact
(integers and fractions), so the two reduction routes can be compared for
equality rather than approximate closeness.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .operators import (
    KIND_DENSE,
    KIND_LGP_DENSE,
    KIND_LGP_SHUFFLE,
    KIND_LOWRANK_LGP,
    KIND_SVD,
    KINDS,
    CompressionConfig,
    ConfigError,
    validate,
)

__all__ = [
    "CompressionConfig",
    "ConfigError",
    "CostReport",
    "cost_of",
    "reduction_closed_form",
    "plan",
    "divisors",
]


@dataclass(frozen=True)
class CostReport:
    """Multiply-add count, parameter count and the resulting reduction.

    For these operators every stored weight participates in exactly one
    multiply-add per application, so madds == params. ``below_dense`` flags
    configurations that are more expensive than the uncompressed baseline.
    """

    madds: int
    params: int
    reduction: Fraction

    @property
    def below_dense(self) -> bool:
        return self.reduction < 1


def _params(cfg: CompressionConfig) -> int:
    m, n = cfg.m, cfg.n
    if cfg.kind == KIND_DENSE:
        return m * n
    if cfg.kind == KIND_SVD:
        return m * n // cfg.r + n * n // cfg.r
    if cfg.kind == KIND_LGP_SHUFFLE:
        return m * n // cfg.g
    if cfg.kind == KIND_LGP_DENSE:
        return m * n // cfg.g + min(m, n) ** 2
    # lowrank-lgp
    inner = n // cfg.r
    return m * inner // cfg.g_out + n * inner // cfg.g_in + inner * inner


def cost_of(cfg: CompressionConfig) -> CostReport:
    """Exact cost report for a validated configuration."""
    validate(cfg)
    params = _params(cfg)
    return CostReport(madds=params, params=params,
                      reduction=Fraction(cfg.m * cfg.n, params))


def reduction_closed_form(cfg: CompressionConfig) -> Fraction:
    """Cost reduction via the per-kind closed-form expression.

    Evaluated independently of cost_of; the two must agree exactly for every
    valid configuration.
    """
    validate(cfg)
    m, n = cfg.m, cfg.n
    if cfg.kind == KIND_DENSE:
        return Fraction(1)
    if cfg.kind == KIND_SVD:
        return Fraction(m * cfg.r, m + n)
    if cfg.kind == KIND_LGP_SHUFFLE:
        return Fraction(cfg.g)
    if cfg.kind == KIND_LGP_DENSE:
        return Fraction(m * n, m * n // cfg.g + min(m, n) ** 2)
    r, g_in, g_out = cfg.r, cfg.g_in, cfg.g_out
    return Fraction(m * r * r * g_out * g_in,
                    m * g_in * r + n * g_out * r + n * g_out * g_in)


def divisors(v: int) -> list[int]:
    """All positive divisors of v, ascending."""
    if v < 1:
        raise ValueError(f"divisors of {v} undefined")
    small, large = [], []
    d = 1
    while d * d <= v:
        if v % d == 0:
            small.append(d)
            if d != v // d:
                large.append(v // d)
        d += 1
    return small + large[::-1]


def _num_factor_matrices(kind: str) -> int:
    # matrices in the composition chain, permutations included
    return {KIND_DENSE: 1, KIND_SVD: 2, KIND_LGP_SHUFFLE: 2,
            KIND_LGP_DENSE: 2, KIND_LOWRANK_LGP: 3}[kind]


def enumerate_configs(m: int, n: int, kinds: Iterable[str]) -> list[CompressionConfig]:
    """Every valid configuration of the given kinds for an m x n map."""
    wanted = set(kinds)
    unknown = wanted - set(KINDS)
    if unknown:
        raise ConfigError(f"unknown kinds {sorted(unknown)}; expected subset of {KINDS}")
    configs: list[CompressionConfig] = []
    if KIND_DENSE in wanted:
        configs.append(CompressionConfig(KIND_DENSE, m, n))
    if KIND_SVD in wanted:
        configs.extend(CompressionConfig(KIND_SVD, m, n, r=r) for r in divisors(n))
    common = [g for g in divisors(n) if m % g == 0]
    if KIND_LGP_SHUFFLE in wanted:
        configs.extend(CompressionConfig(KIND_LGP_SHUFFLE, m, n, g=g) for g in common)
    if KIND_LGP_DENSE in wanted:
        configs.extend(CompressionConfig(KIND_LGP_DENSE, m, n, g=g) for g in common)
    if KIND_LOWRANK_LGP in wanted:
        for r in divisors(n):
            inner = n // r
            # divisors of n/r divide n as well, so g_in | n holds for free
            for g_in in divisors(inner):
                for g_out in (g for g in divisors(inner) if m % g == 0):
                    configs.append(CompressionConfig(
                        KIND_LOWRANK_LGP, m, n, r=r, g_in=g_in, g_out=g_out))
    return configs


def plan(m: int, n: int, target_reduction, kinds: Optional[Iterable[str]] = None,
         ) -> list[tuple[CompressionConfig, CostReport]]:
    """All valid configurations with reduction >= target, cheapest first.

    Ties are broken by fewer factor matrices, then kind name and the
    structure parameters, so the order is fully deterministic.
    """
    if m < 1 or n < 1:
        raise ConfigError("m and n must be >= 1")
    target = Fraction(target_reduction)
    if target < 1:
        raise ConfigError(f"target reduction must be >= 1, got {target}")
    if kinds is None:
        kinds = KINDS
    results = []
    for cfg in enumerate_configs(m, n, kinds):
        report = cost_of(cfg)
        if report.reduction >= target:
            results.append((cfg, report))
    results.sort(key=lambda pair: (
        pair[1].params,
        _num_factor_matrices(pair[0].kind),
        pair[0].kind,
        pair[0].g or 0,
        pair[0].r or 0,
        pair[0].g_in or 0,
        pair[0].g_out or 0,
    ))
    return results
