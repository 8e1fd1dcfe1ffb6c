#!/usr/bin/env python3
"""
icons.py - Centralized icon definitions and console helpers for wienernet

Usage:
    from wienernet.icons import fence, log_success, log_warning
    fence("Simulating trajectories")
    print(log_success("Batch written", prefix="simulate"))

All unicode characters are defined here once. Set WIENERNET_ASCII=1 (or call
use_ascii_icons()) on terminals without unicode support.
"""

import os
from dataclasses import dataclass
from datetime import datetime


@dataclass(frozen=True)
class Icons:
    """
    Centralized icon definitions.

    Categories:
    - Status: SUCCESS, ERROR, WARNING, INFO, SKIP
    - Pipeline: GRAPH, SIMULATE, SPECTRUM, SOLVER, THEORY, TARGET
    - Output: PACKAGE, CHART, WORKING
    """

    # Status
    SUCCESS: str = "✅"
    ERROR: str = "❌"
    WARNING: str = "⚠️"
    INFO: str = "ℹ️"
    SKIP: str = "⏭️"

    # Pipeline stages
    GRAPH: str = "🕸️"
    SIMULATE: str = "🎲"
    SPECTRUM: str = "🌈"
    SOLVER: str = "🧮"
    THEORY: str = "📐"
    TARGET: str = "🎯"

    # Output
    PACKAGE: str = "📦"
    CHART: str = "📊"
    WORKING: str = "⏳"


class AsciiIcons:
    """ASCII-only fallback icons for limited terminals."""

    SUCCESS = "[OK]"
    ERROR = "[X]"
    WARNING = "[!]"
    INFO = "[i]"
    SKIP = "[ ]"
    GRAPH = "[G]"
    SIMULATE = "[S]"
    SPECTRUM = "[F]"
    SOLVER = "[W]"
    THEORY = "[T]"
    TARGET = "[>]"
    PACKAGE = "[Z]"
    CHART = "[C]"
    WORKING = "[.]"


icons = AsciiIcons() if os.environ.get("WIENERNET_ASCII", "").lower() in {"1", "true", "yes", "on"} else Icons()


def use_ascii_icons():
    """Switch to ASCII-only icons globally."""
    global icons
    icons = AsciiIcons()


# =========================================================================
# Output Helper Functions
# =========================================================================

def fence(label: str = "") -> None:
    """
    Print a visual separator for discrete pipeline stages.

    Output:
        ......................................................................
        [14:23:45] Searching n_min
    """
    ts = datetime.now().strftime("%H:%M:%S")
    print("." * 70)
    if label:
        print(f"[{ts}] {label}")
    else:
        print(f"[{ts}]")
    print()


def log(icon: str, message: str, prefix: str = "") -> str:
    """
    Format a log message with icon.

    Returns:
        Formatted string like "✅ Done!" or "[harness] ✅ Done!"
    """
    if prefix:
        return f"[{prefix}] {icon} {message}"
    return f"{icon} {message}"


def log_success(message: str, prefix: str = "") -> str:
    return log(icons.SUCCESS, message, prefix)


def log_error(message: str, prefix: str = "") -> str:
    return log(icons.ERROR, message, prefix)


def log_warning(message: str, prefix: str = "") -> str:
    return log(icons.WARNING, message, prefix)


def log_info(message: str, prefix: str = "") -> str:
    return log(icons.INFO, message, prefix)


def status_icon(success: bool) -> str:
    """Return SUCCESS or ERROR icon based on boolean."""
    return icons.SUCCESS if success else icons.ERROR
