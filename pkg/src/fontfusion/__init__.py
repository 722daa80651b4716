"""Glyph style fusion with an AdaIN generator, a fusion encoder, and a
feature-tapped discriminator, trained label-free with style-mixing
regularization.

Subpackages and modules:

- ``glyph_data``: glyph rasterization, procedural corpora, splits, batching
- ``networks``: the three differentiable networks and style schedules
- ``losses``: adversarial / reconstruction / feature-matching objectives
- ``trainer``: the joint two-path training loop and checkpointing
- ``mixer``: inference (reconstruction, mixing, sampling, grid rendering)
- ``cli``: the ``fontfusion`` command-line entry point
"""

__version__ = "0.1.0"
