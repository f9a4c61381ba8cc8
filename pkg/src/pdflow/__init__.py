"""Primal-dual optical flow with divergence (M1) and curl (M2) regularisation."""
from .grid import FlowField, PyramidParams
from .operators import DualState, Model

__all__ = ["FlowField", "PyramidParams", "DualState", "Model"]
