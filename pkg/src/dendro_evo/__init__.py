"""Hierarchical clustering scored and drawn through evolutionary models
fitted on the dendrogram."""

__version__ = "0.1.0"
