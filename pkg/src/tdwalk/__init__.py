"""Learning Boolean juntas from hypercube random-walk data.

Core pieces: exact sparse Fourier-Walsh targets (`boolfn`), the lazy walk
and related chains (`walk`), the temporal-difference loss (`loss`), the
layerwise two-phase learner (`shallow`), the jointly trained MLP
(`deepnet`), measurements and bounds (`analysis`), and the CLI harness
(`harness`, also the `tdwalk` console script).
"""

from . import analysis, boolfn, deepnet, loss, records, rng, shallow, walk

__all__ = [
    "analysis",
    "boolfn",
    "deepnet",
    "loss",
    "records",
    "rng",
    "shallow",
    "walk",
]

__version__ = "0.1.0"
