"""Losses, metrics, optimizer, training loop, evaluation and checkpoints."""
