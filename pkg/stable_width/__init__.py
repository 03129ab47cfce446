"""stable-width - infinite-width stable limits of heavy-tailed MLPs"""

__version__ = "0.1.0"
