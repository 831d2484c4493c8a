# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
# ruff: noqa: E402, F401

import importlib.metadata

try:
    __version__ = importlib.metadata.version("cppdd")
except importlib.metadata.PackageNotFoundError:
    __version__ = "0.0.0"

del importlib

__all__ = ["__version__"]
