"""Electro-thermal design and analysis of serpentine polysilicon micro-hotplates."""

__version__ = "0.1.0"
