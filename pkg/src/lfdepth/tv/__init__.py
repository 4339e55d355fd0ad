"""Dual-constrained total-variation refinement solved with PPXA."""
