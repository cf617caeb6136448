"""Latent-evolution surrogates for time-dependent PDEs.

Subpackages cover ground-truth solvers, dataset plumbing, the
encode/evolve/decode model, the multi-term training objective, latent
rollout with evaluation metrics, and gradient-based inverse design of
boundary parameters.
"""

__version__ = "0.1.0"
