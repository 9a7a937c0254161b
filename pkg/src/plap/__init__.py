"""Finite-element pipeline for singular, discontinuous p-Laplacian problems."""
