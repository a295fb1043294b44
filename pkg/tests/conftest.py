"""Keeps the tests directory on sys.path so `synth` imports resolve."""
