"""Entity characterization on UTXO transaction graphs."""

__version__ = "0.1.0"
