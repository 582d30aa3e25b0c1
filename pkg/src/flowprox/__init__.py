"""Proximal-operator toolkit for OT conditional flow matching.

Submodules are imported explicitly (``from flowprox import transport``);
the package root stays import-light so the CLI can configure threading
before numpy loads.
"""

__version__ = "0.1.0"

__all__ = [
    "schedule",
    "transport",
    "potential",
    "field",
    "neural",
    "flow",
    "lyapunov",
    "datasets",
    "proxcheck",
    "cli",
]
