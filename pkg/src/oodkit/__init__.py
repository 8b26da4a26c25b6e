"""Out-of-distribution detection toolkit.

Scores test samples against a trained image density model by comparing the
log-likelihood of each sample with the log-likelihoods of bijectively
transformed copies ("stir" rotations/reflections and "shake" patch
derangements), with an optional low-likelihood pre-filter. Ships a small
trainable causal autoregressive density model, compressed-length and
likelihood-ratio baselines, and ROC/PR evaluation.
"""

__version__ = "0.1.0"
