# src/__init__.py
"""Networked Cournot platform analysis - Source Package"""

__version__ = "1.0.0"
__author__ = "NetCournot Team"
__description__ = "Equilibria, welfare and price of anarchy for Cournot competition on platform networks"
