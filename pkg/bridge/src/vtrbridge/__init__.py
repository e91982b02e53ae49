"""Out-of-process model server speaking newline-delimited JSON over stdio.

The serving process exposes two model calls, "embed" and "relpose",
behind a versioned hello handshake, so the navigation stack can use real
perception models without linking an ML runtime into its own process.
The bundled echo backend answers both calls deterministically with no
model dependencies, which is what the conformance tests run against.
"""

from .backends import EchoBackend
from .server import serve

__all__ = ["EchoBackend", "serve"]
