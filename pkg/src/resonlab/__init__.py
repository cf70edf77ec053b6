"""resonlab: resonant averaging laboratory for weakly nonlinear CGL on tori."""

__version__ = "0.1.0"
