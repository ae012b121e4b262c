"""Urban underground infrastructure toolkit.

Converts legacy-derived vector data into a clean multi-layer network,
detects and repairs common conversion errors under human validation, and
answers integrated cross-layer region/time queries with role-based
access control.
"""

__version__ = "0.1.0"
