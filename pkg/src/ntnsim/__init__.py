"""Heterogeneous UAV network simulator with a two-timescale multi-agent
actor-critic stack: one tethered donor and four untethered relay nodes serve
mobile ground users; scheduling agents act every slot, trajectory agents
every five slots."""

__version__ = "0.1.0"
