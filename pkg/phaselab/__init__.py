"""PhaseLab - numerical laboratory for nonlocal Allen-Cahn p-energies"""

__version__ = "1.0.0"
