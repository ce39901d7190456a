"""Exponent fits, density scans and Gamma-convergence sweeps"""
