"""compatlearn: semi-supervised metric learning for outfit compatibility.

Learns an image embedding where complementary items sit close together,
from a small labeled outfit set plus a large unlabeled pool, and evaluates
with fill-in-the-blank accuracy and compatibility ROC-AUC.
"""

__version__ = "0.1.0"
