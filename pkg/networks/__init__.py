"""Recurrent streams, fusion network and their optimizers."""
