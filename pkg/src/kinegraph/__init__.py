"""kinegraph: prior-graph construction, bone selection and multi-hop
attention diffusion for skeleton action graphs, with spectral verification
and a finite-difference micro-trainer."""

from ._backend import backend_name

__version__ = "0.1.0"

__all__ = ["__version__", "backend_name"]
