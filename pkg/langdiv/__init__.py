"""Linguistic diversity of places from geotagged social-media text."""

__version__ = "0.1.0"
