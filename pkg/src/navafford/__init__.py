"""Synthetic navigation-affordance datasets: procedural kitchens, feasibility
labels, Gaussian kNN affordance maps, and their evaluation."""

__version__ = "0.1.0"
