# -*- coding: utf-8 -*-
"""Routine / non-routine day discovery on egocentric photo-stream features."""

__version__ = "0.1.0"
