"""Double meta-reinforcement learning on a windy planar lander."""

__version__ = "0.1.0"
