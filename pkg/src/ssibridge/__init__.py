"""Attested bridge between a government identity wallet and a self-sovereign wallet.

Credentials exported from the government wallet are verified once inside a
(simulated) enclave against their issuer's federation, re-issued with the
attestation quote embedded, and anchored on a simulated ledger so relying
parties can check them later without contacting the federation.
"""

from .errors import SsiBridgeError

__version__ = "0.1.0"

__all__ = ["SsiBridgeError", "__version__"]
