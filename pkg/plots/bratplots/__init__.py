"""Standalone figure scripts over the training/simulation CSV outputs.

Pure file-to-file transforms: each script reads documented CSV schemas,
renders a deterministic PNG, and never recomputes statistics beyond
display binning.
"""

import matplotlib

matplotlib.use("Agg")

__version__ = "0.1.0"
