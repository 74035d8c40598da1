"""Multi-analyst differentially private query engine with privacy provenance."""

__version__ = '0.1.0'
