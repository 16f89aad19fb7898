"""OPC UA traffic synthesis, protocol-aware flow features, and IDS datasets."""

__version__ = "0.1.0"
