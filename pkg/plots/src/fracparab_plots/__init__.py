"""Deterministic batch figure rendering for the experiment CSV outputs."""

from .render import NoDataError, RenderError, render

__all__ = ["render", "RenderError", "NoDataError"]
