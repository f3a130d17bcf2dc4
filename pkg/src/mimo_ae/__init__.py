"""Link-level MIMO simulation, classical transceivers and end-to-end autoencoders."""
from . import ae, baseline, channel, cli, constellation, linalg, nn, rng, ser

__version__ = "0.1.0"

__all__ = ["ae", "baseline", "channel", "cli", "constellation", "linalg", "nn", "rng", "ser"]
