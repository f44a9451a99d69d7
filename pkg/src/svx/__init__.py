"""Vocal extraction by synthesis: a dilated gated conv net maps mixture
spectrograms to vocoder parameters, from which a clean vocal is rendered."""

__version__ = "0.1.0"
