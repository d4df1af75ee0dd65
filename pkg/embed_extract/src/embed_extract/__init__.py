"""Produce softalign-format datasets from public annotation releases.

Converts raw annotation files (ChaosNLI, POPQUORN, CIFAR-10H) to the
toolkit's annotation JSONL, and computes frozen embeddings (local vision
backbones or an embeddings API) into its binary format. This package only
writes the documented file formats; it never imports the training toolkit.
"""

__version__ = "0.1.0"
