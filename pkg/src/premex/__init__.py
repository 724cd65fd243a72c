"""Medical-insurance premium regression with explainable tree ensembles.

Trains random forest, gradient boosting, and second-order regularized
boosting models on the premium dataset, evaluates them with the usual
regression metrics, and explains them with exact Shapley values and
ICE / c-ICE / d-ICE curves.  Every artifact (models, tables, figures)
is a deterministic function of the input data, the configuration, and
a single seed.
"""

__version__ = "0.1.0"
