"""Causal CARMA random fields."""
