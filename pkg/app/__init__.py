# Causal Effect Workbench Package
__version__ = "1.0.0"
