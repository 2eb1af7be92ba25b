"""Tower-load-limiting economic MPC for a 5MW-class wind turbine."""

__version__ = "0.1.0"
