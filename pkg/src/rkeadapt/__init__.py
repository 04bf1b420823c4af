"""Adaptive BLE remote keyless entry: link control and fob authentication.

Submodules:

``chanqual``   per-channel packet delivery tracking
``hopctl``     channel map maintenance and hop selection
``linkctl``    transmit power and PHY mode control
``authcore``   pseudo-identities, session keys, certificates
``protocol``   fob and vehicle state machines
``rfsim``      seeded link simulator
``scenario``   config loading, scenario runs, CSV/JSON export
``attacks``    scripted adversaries
"""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
