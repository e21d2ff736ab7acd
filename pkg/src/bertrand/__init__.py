"""Repeated Bertrand pricing games on a discrete price grid.

Simulates threat-based equilibrium profiles, no-regret defections, and
verifies the resulting market-price bounds numerically.
"""

from bertrand.grid import (
    PriceGrid,
    PriceDist,
    RealizedProfile,
    bertrand_payoffs,
    expected_min,
    expected_utility_fixed_price,
    floor_to_grid,
    ceil_to_grid,
)

__all__ = [
    "PriceGrid",
    "PriceDist",
    "RealizedProfile",
    "bertrand_payoffs",
    "expected_min",
    "expected_utility_fixed_price",
    "floor_to_grid",
    "ceil_to_grid",
]
