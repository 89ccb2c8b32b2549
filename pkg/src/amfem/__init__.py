"""Adaptive mixed finite elements (lowest-order Raviart-Thomas) in 2D.

Subpackages are imported lazily so that the CLI can configure threading
environment variables before numpy is loaded.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "quadrature",
    "mesh",
    "problem",
    "mixed_fem",
    "linsolve",
    "estimator",
    "adapt",
    "report",
    "cli",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f"{__name__}.{name}")
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
