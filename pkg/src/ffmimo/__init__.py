"""Feedback-free MIMO downlink simulator.

Pipeline: deterministic geometry channel -> beam codebook -> ground-truth
CSI reports -> geolocation-based CSI predictors -> PHY rate model ->
many-to-one RB matching, with an experiment harness on top.
"""

__version__ = "0.1.0"
