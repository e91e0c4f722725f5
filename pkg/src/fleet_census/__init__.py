"""fleet-census: balanced logistic-vehicle image datasets and a linear
classifier head over stored backbone features.

Stages: taxonomy -> query planning -> ingest -> curation -> balance/split ->
(external feature extraction) -> head training -> evaluation. Each stage is
importable on its own; the ``fleet-census`` CLI wires them together.
"""

__version__ = "0.1.0"
