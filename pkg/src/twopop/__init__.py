"""Two-species nonlocal advection-reaction model on the periodic interval [0, 2*pi)."""
__version__ = "0.1.0"
