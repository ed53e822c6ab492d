"""Beam alignment with a hybrid reflecting/sensing surface: link-level simulator.

Library modules: :mod:`array`, :mod:`channel`, :mod:`hirs`, :mod:`codebook`,
:mod:`signal`, :mod:`estimator`, :mod:`crlb`, :mod:`simulator`; the command
line lives in :mod:`cli`.
"""

__version__ = "0.1.0"

from .config import ConfigError, ParamGrid, SystemConfig  # noqa: E402

__all__ = ["ConfigError", "ParamGrid", "SystemConfig", "__version__"]
