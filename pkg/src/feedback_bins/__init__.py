"""Two-bin balls-and-bins process with feedback: simulation, regime classification
and Monte Carlo verification of the monopoly/dominance phase transition."""

__version__ = "0.1.0"
