"""Skill-embedding analysis of occupational skill change."""

__version__ = "0.1.0"
