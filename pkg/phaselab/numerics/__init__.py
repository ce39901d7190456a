"""Discretized potentials, fields, kernel quadrature, energies and solvers"""
