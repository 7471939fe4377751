"""speciescope: a workbench for mapping, predicting and steering a
12-parameter generative-art design space from an artist's ratings."""

__version__ = "0.1.0"
