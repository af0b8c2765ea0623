"""GUIDER - modality-guided denoising and optimal-transport distillation for recommenders."""

__version__ = "0.1.0"
__author__ = "Rokurolize"
