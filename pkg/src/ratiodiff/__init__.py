"""ratiodiff: prompt-controlled two-stage diffusion augmentation for
long-tailed land-cover segmentation."""

__version__ = "0.1.0"

from .schema import DOMAINS, LOVEDA_SCHEMA, ClassSchema, DomainLabel

__all__ = ["DOMAINS", "LOVEDA_SCHEMA", "ClassSchema", "DomainLabel", "__version__"]
