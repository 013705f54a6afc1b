"""Cross-view patch feature synthesis and view-agnostic comparison."""

__version__ = "0.1.0"
