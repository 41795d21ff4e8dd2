"""Reference worker for the ``layerga-eval/1`` wire protocol.

Serves synthetic accuracy landscapes over line-delimited JSON on
stdin/stdout.  Deliberately shares no code with the engine that drives it:
the landscape formula is reimplemented here so the protocol boundary and
formula fidelity both get exercised for real.
"""

__version__ = "0.1.0"
