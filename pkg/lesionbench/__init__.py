"""
lesionbench: a benchmark harness for brain-lesion segmentation on MRI.

Five segmentation architectures, four batch samplers and three loss
functions, trained and evaluated under one seeded protocol.
"""

__version__ = "0.1.0"
