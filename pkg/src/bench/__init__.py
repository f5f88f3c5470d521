"""Benchmark runs: checkpointed streaming, artifacts and the command-line entry point."""
