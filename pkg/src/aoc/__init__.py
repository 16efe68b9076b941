"""Age-of-information bounds from min-plus and stochastic network calculus."""
__version__ = "0.1.0"
