"""Numeric kernel, preprocessing, metrics, configuration and the training pipeline."""
