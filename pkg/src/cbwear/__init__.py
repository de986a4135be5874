"""Multimodal wearable pipeline: detection and prediction of challenging-behavior
episodes from wrist/ankle accelerometry, electrodermal activity, and skin
temperature, with a built-in synthetic cohort for desk-scale verification."""

__version__ = "0.1.0"
