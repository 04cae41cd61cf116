"""Offline figure rendering for rydark CSV result bundles."""

__version__ = "0.1.0"

from .recipes import FIGURES, FigureRecipe, SchemaError, load_csv
from .render import render
