"""Synthetic optical coherence elastography benchmark.

Pipeline stages: wave simulation -> phase preprocessing -> wavefront
velocity extraction -> regression models (classical and spatio-temporal
CNNs) -> leave-one-concentration-out evaluation.
"""

__version__ = "0.1.0"
