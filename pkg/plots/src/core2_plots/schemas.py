"""Column contracts for the report CSVs this package renders.

These tables are deliberately duplicated from the producing side; the
shared fixture file schemas/report_columns.json at the repository root
keeps both in sync (each side's tests compare against it).
"""

REQUIRED_COLUMNS = {
    "error_curve": ["seed", "omega_star", "grid_argmin", "e0", "e1", "e_star", "passed"],
    "spectrum_histogram": ["bin", "energy_w2s", "energy_cfg"],
    "tradeoff_frontier": ["slow_steps", "nfe", "mse", "swd"],
    "ablation_lines": ["iterations", "swd", "mse"],
}

# figure kind -> producing CSV name in the shared fixture
SOURCE_REPORT = {
    "error_curve": "theorem_report",
    "spectrum_histogram": "spectrum",
    "tradeoff_frontier": "tradeoff",
    "ablation_lines": "ablation",
}

FIGURE_KINDS = tuple(REQUIRED_COLUMNS)
