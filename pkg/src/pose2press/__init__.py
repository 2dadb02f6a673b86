"""Foot-pressure heatmap regression from 2D human pose keypoints.

Library + CLI: a small reverse-mode autodiff engine, the residual
upsampling regression network built on it, a confidence-masked
nearest-neighbor baseline, center-of-pressure stability metrics, and a
synthetic-data experiment harness.
"""

__version__ = "0.1.0"
