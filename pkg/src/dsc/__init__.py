"""Deep spatiotemporal clustering with a CNN-LSTM autoencoder, written on numpy."""

__version__ = "0.1.0"
