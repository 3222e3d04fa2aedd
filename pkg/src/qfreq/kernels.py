"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise (or when the
environment variable ``QFREQ_PURE`` is set to a non-empty value other than
``0``) the numpy implementation is used. ``BACKEND`` names the active one.
"""
import os

from . import _kernels_py

_force_pure = os.environ.get("QFREQ_PURE", "") not in ("", "0")

if _force_pure:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

relax_nodes = _impl.relax_nodes
ball_moments = _impl.ball_moments
ball_extent = _impl.ball_extent
edge_energy = _impl.edge_energy


def get_backend(name: str | None = None):
    """Return the kernel module called ``name`` (``"compiled"`` or ``"python"``).

    ``None`` gives the active backend.
    """
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels  # type: ignore[attr-defined]

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    """Names of the backends that import in this environment."""
    names = ["python"]
    try:
        get_backend("compiled")
    except ImportError:
        return names
    return ["compiled"] + names
