"""Cold-start cross-domain recommendation with disentangled intent channels.

The library covers the full pipeline: two-domain interaction ingestion,
sparsity filtering and cold-start splitting, a multi-channel bipartite graph
encoder with siamese online/target copies, random-walk similarity targets,
intra/inter-domain contrastive losses trained by variational EM, intent-
weighted scoring, and leave-one-out ranking evaluation.
"""

__version__ = "0.1.0"

from . import autodiff, bridge, checkpoint, config, data, encoder, evaluation
from . import intra, scoring, siamese, synthetic, trainer, walks

__all__ = [
    "autodiff", "bridge", "checkpoint", "config", "data", "encoder",
    "evaluation", "intra", "scoring", "siamese", "synthetic", "trainer",
    "walks",
]
