"""KDSM cloth toolkit - main package"""

__version__ = "1.0.0"

