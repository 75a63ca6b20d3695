"""Reference values for the bundled dose-response benchmark scenarios.

These are the published optimal designs, allocations, and efficiencies for
the EMAX / loglinear / exponential comparison study on the dose range [0, 1]
(equal error variance 1.478^2 in both groups unless stated otherwise).  The
table commands recompute every quantity and emit these numbers side by side
for diffing; the acceptance suite asserts agreement at the documented
tolerances (support points +-0.01, weights +-1 percentage point, and
efficiencies +-0.5 percentage points).

Weights are stored in percent, matching how the values were published.
"""

BENCHMARK_SIGMA2 = 1.478**2

MODEL_NAMES = ("emax", "loglinear", "exponential")

# Reference allocation used in the benchmark study: 20% of patients at each
# of five dose levels, identically in both groups.
STANDARD_DESIGN = {
    "points": [0.0, 0.05, 0.2, 0.6, 1.0],
    "weights": [0.2, 0.2, 0.2, 0.2, 0.2],
}

_THIRD = 100.0 / 3.0

# Worst-case-optimal design pairs, keyed (model1, model2); each entry gives
# (support points, weights in percent) for the group-1 and group-2 designs.
TABLE2_PAIRS = {
    ("emax", "emax"): {
        "xi1": ([0.0, 0.14, 1.0], [_THIRD, _THIRD, _THIRD]),
        "xi2": ([0.0, 0.14, 1.0], [_THIRD, _THIRD, _THIRD]),
    },
    ("emax", "loglinear"): {
        "xi1": ([0.0, 0.15, 1.0], [33.4, 32.7, 33.9]),
        "xi2": ([0.0, 0.22, 1.0], [34.0, 32.5, 33.5]),
    },
    ("emax", "exponential"): {
        "xi1": ([0.0, 0.15, 1.0], [32.0, 28.2, 39.8]),
        "xi2": ([0.0, 0.74, 1.0], [40.3, 27.4, 32.3]),
    },
    ("loglinear", "loglinear"): {
        "xi1": ([0.0, 0.23, 1.0], [_THIRD, _THIRD, _THIRD]),
        "xi2": ([0.0, 0.23, 1.0], [_THIRD, _THIRD, _THIRD]),
    },
    ("loglinear", "exponential"): {
        "xi1": ([0.0, 0.24, 1.0], [33.5, 27.8, 38.7]),
        "xi2": ([0.0, 0.74, 1.0], [39.2, 26.8, 34.0]),
    },
    ("exponential", "exponential"): {
        "xi1": ([0.0, 0.75, 1.0], [_THIRD, _THIRD, _THIRD]),
        "xi2": ([0.0, 0.75, 1.0], [_THIRD, _THIRD, _THIRD]),
    },
}

# Worst-case efficiencies (percent) of competing designs, by comparison pair.
TABLE3_COLUMNS = (
    ("loglinear", "exponential"),
    ("loglinear", "emax"),
    ("exponential", "emax"),
)

TABLE3_EFFICIENCIES = {
    "standard": (58.85, 72.83, 59.00),
    "dopt_emax": (2.21, 93.81, 2.24),
    "dopt_loglinear": (7.31, 92.44, 7.40),
    "dopt_exponential": (15.08, 3.72, 4.29),
    "nu_model1_fixed": (95.72, 99.94, 96.70),
    "nu_model2_fixed": (96.63, 99.96, 96.00),
}

# One-design-fixed optima, keyed (free model, fixed model); the fixed group
# uses the D-optimal design of its model.
TABLE4_DESIGNS = {
    ("emax", "emax"): ([0.0, 0.14, 1.0], [_THIRD, _THIRD, _THIRD]),
    ("emax", "loglinear"): ([0.0, 0.15, 1.0], [34.0, 32.0, 34.0]),
    ("emax", "exponential"): ([0.0, 0.14, 1.0], [35.1, 29.7, 35.2]),
    ("loglinear", "emax"): ([0.0, 0.23, 1.0], [34.0, 32.0, 34.0]),
    ("loglinear", "loglinear"): ([0.0, 0.23, 1.0], [_THIRD, _THIRD, _THIRD]),
    ("loglinear", "exponential"): ([0.0, 0.22, 1.0], [36.0, 28.0, 36.0]),
    ("exponential", "emax"): ([0.0, 0.76, 1.0], [35.7, 28.6, 35.7]),
    ("exponential", "loglinear"): ([0.0, 0.75, 1.0], [36.7, 26.6, 36.7]),
    ("exponential", "exponential"): ([0.0, 0.75, 1.0], [_THIRD, _THIRD, _THIRD]),
}

# Jointly allocation-optimal solution for EMAX vs exponential with the second
# group's error variance five times larger.
TABLE5 = {
    "models": ("emax", "exponential"),
    "sigma2_factor": (1.0, 5.0),
    "gamma": (30.2, 69.8),
    "xi1": ([0.0, 0.15, 1.0], [32.4, 24.9, 42.7]),
    "xi2": ([0.0, 0.75, 1.0], [36.9, 30.4, 32.7]),
}
