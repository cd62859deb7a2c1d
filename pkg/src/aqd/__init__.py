"""Downscale coarse groundwater-storage grids to fine-scale groundwater levels.

The package derives hydro-geological factors from terrain rasters, trains
random-forest models that densify sparse well observations into a pseudo
ground truth, learns an upsampling model from coarse storage cells to fine
points, and computes recharge and long-term trends. A deterministic synthetic
world with known generative truth backs the test suite.
"""

__version__ = "0.1.0"
