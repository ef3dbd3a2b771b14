"""Few-shot cross-lingual clinical de-identification toolkit.

Trains a small transformer token classifier from scratch, runs zero-shot /
few-shot / multi-task transfer experiments between a source and a target
corpus, evaluates with entity-level F1 and Cohen's kappa, redacts PHI from
raw notes, and hosts the annotation service that produces few-shot and
evaluation corpora.
"""

__version__ = "0.1.0"
