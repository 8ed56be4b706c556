import numpy as np
import pytest

from hamscope.hamfit import Domain, PolyHamiltonian

# Printed before/after polynomials, as {(i, j): h_ij}.
PRINTED_BEFORE = {(0, 0): 0.045, (0, 1): -0.095, (0, 2): 0.149, (1, 0): -0.046, (1, 1): -0.236, (2, 0): 0.058}
PRINTED_AFTER = {(0, 0): 0.070, (0, 1): 0.082, (0, 2): 0.044, (1, 0): -0.192, (1, 1): 0.002, (2, 0): -0.008}

UNIT_SQUARE = Domain((-1.0, 1.0), (-1.0, 1.0), 101)


def printed_pair(gauge="zero_mean_over_domain", dom=UNIT_SQUARE):
    hb = PolyHamiltonian(2, PRINTED_BEFORE, dom, gauge)
    ha = PolyHamiltonian(2, PRINTED_AFTER, dom, gauge)
    return hb, ha


def poly(coeffs, max_degree=2, dom=UNIT_SQUARE, gauge="zero_mean_over_domain"):
    return PolyHamiltonian(max_degree, coeffs, dom, gauge)


def synth_config(before_h, after_h, **overrides):
    """Pipeline config dict for a synthetic before/after pair of scenario dicts."""
    cfg = {
        "input": {"synth": {"before": before_h, "after": after_h}},
        "normalization": "zscore_per_segment",
        "embedding": {"method": "pca_only"},
    }
    cfg.update(overrides)
    return cfg


def ham_spec(coeffs):
    return {"max_degree": 2, "coeffs": [{"i": i, "j": j, "value": v} for (i, j), v in coeffs.items()]}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# One line per acceptance criterion, repeated in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
