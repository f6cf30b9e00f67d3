"""Shared fixtures and the acceptance summary hook."""

from __future__ import annotations

import numpy as np
import pytest

from dltpnl.geometry import Pose, rotation_exp

ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    """Print and keep one pass/fail line for an acceptance criterion (``ok=None`` marks a skip)."""
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"{status} criterion {number}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_rotation(rng):
    w = rng.standard_normal(3)
    w *= rng.uniform(0, np.pi * 0.999) / np.linalg.norm(w)
    return rotation_exp(w)


def random_pose(rng, distance=25.0):
    return Pose(random_rotation(rng), rng.standard_normal(3) * distance)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
