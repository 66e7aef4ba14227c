"""Toolkit for measuring and modeling meeting effectiveness and inclusiveness.

Subpackages map onto the pipeline stages: :mod:`records` (schema, filters,
outcomes), :mod:`features` (binarization and composites), :mod:`glm`
(IRLS / l1 logistic fits), :mod:`graph` (the EIM graph), :mod:`interaction`
(canned interaction GLMs), :mod:`gbdt` (boosted trees and evaluation),
:mod:`synthgen` (planted-truth data), :mod:`survey` and :mod:`skew`
(scheduler simulation and rating-skew analytics).
"""

__version__ = "0.1.0"
