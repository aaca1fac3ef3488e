"""Offline toolkit: obstacle ground-truth kinematics in the ego frame from
synchronized multi-vehicle positioning logs, with analytical uncertainty
bounds and synthetic validation scenarios."""

__version__ = "0.1.0"
