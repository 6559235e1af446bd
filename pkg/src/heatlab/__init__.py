"""Heat kernels, harmonic functions and survival asymptotics for Brownian motion
killed on the boundary of cones and multicone domains."""

__version__ = "0.1.0"
