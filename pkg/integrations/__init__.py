"""File I/O: CSV datasets, checkpoints, reports and the synthetic data source."""
