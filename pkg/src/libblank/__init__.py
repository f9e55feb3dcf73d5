"""Call-chain prediction and demand-driven library blanking, modelled end to end."""

__version__ = "0.1.0"

from .ir import CFGError, Program, SchemaError, load_program  # noqa: E402
from .kernels import BACKEND  # noqa: E402

__all__ = ["__version__", "BACKEND", "CFGError", "Program", "SchemaError", "load_program"]
