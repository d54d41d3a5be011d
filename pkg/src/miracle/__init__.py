"""Multimodal postoperative-risk pipeline: variational Bayesian encoders,
an embedded remark channel, weighted fusion and focal-loss training."""

__version__ = "0.1.0"
