"""neckgap: convex neck domains on curved surfaces and their fundamental gap.

The package builds long thin geodesically convex domains on model
surfaces of (partially) negative curvature, solves the Dirichlet
Laplace-Beltrami eigenproblem on them with P1 finite elements, and
verifies the analytic estimate chain that forces the spectral gap
lambda_2 - lambda_1 to collapse exponentially as the neck tightens.
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, load_config, preset_config  # noqa: E402
from .runner import RunRecord, run_experiment  # noqa: E402
from .reports import emit_outputs  # noqa: E402

__all__ = [
    "ExperimentConfig", "RunRecord", "emit_outputs", "load_config",
    "preset_config", "run_experiment",
]
