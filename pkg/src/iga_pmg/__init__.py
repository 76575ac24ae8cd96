"""Isogeometric p-multigrid solvers with ILUT smoothing."""
