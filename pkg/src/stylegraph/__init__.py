"""Driver-style detection from vehicle trajectories via traffic-graph centrality."""
__version__ = "0.1.0"
