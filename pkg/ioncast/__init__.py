"""IonCast engine: graph and conv-LSTM forecasters for global TEC maps."""
__version__ = "0.1.0"
