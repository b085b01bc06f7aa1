"""msqale: unsupervised no-reference quality scoring for low-light restored images.

Pipeline: a synthetic multi-distortion corpus feeds scene-wise multi-view
contrastive training of per-subband patch encoders over a Laplacian pyramid;
scoring compares test-patch feature statistics against a pristine-patch
multivariate Gaussian model. An NSS feature provider (MSCN + AGGD) plugs into
the same scoring framework as a classic baseline.
"""

__version__ = "0.1.0"

from .core import SeededRng, Patch, SceneSet, load_image, save_image, crop_patch, luma
from .pyramid import decompose, reconstruct
from .scorer import score_image, quality_score
