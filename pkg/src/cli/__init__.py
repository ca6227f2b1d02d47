# src/cli/__init__.py
"""Command-line interface for the NetCournot toolkit"""

__version__ = "1.0.0"
__author__ = "NetCournot Team"
