"""Multimodal emotion recognition in conversation with relational temporal
graph message passing and pairwise cross-modal attention."""

__version__ = "0.1.0"
