"""Large deviations of the tree-top of Kingman's coalescent: rate functions,
samplers and a Monte Carlo harness."""

__version__ = "0.1.0"
