"""
Superoptimal four-block solver
Numerical engine and batch front door for superoptimal analytic approximation
"""
