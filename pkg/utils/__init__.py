"""Environment settings and traceback capture."""
