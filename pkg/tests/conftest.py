import numpy as np
import pytest

ACCEPTANCE_LINES = []


def record(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_bandlimited(grid, rng, modes=10, decay=2.0):
    """Real trigonometric polynomial with ``modes`` nonzero Fourier modes."""
    c = np.zeros(grid.k.size, dtype=complex)
    c[1:modes + 1] = (rng.normal(size=modes) + 1j * rng.normal(size=modes)) / np.arange(
        1, modes + 1) ** decay
    c[0] = rng.normal()
    return grid.field(np.fft.irfft(c, n=grid.N) * grid.N / modes)


def literal_symbol(letter, n, k):
    """Term-by-term substitution d -> ik into the operator sums (independent of the library)."""
    D = 1j * np.asarray(k, dtype=float)
    if letter == "A":
        out = (-1) ** (n + 1) * D ** (2 * n) - 1
        for j in range(1, n):
            out = out + 2 * (-1) ** (n + 1 - j) * D ** (2 * (n - j))
        return out
    terms = [(-1) ** (n - j) * D ** (2 * (n - j - 1)) for j in range(n)]
    C = sum(terms)
    return C if letter == "C" else sum((-1) ** (n - j) * D ** (2 * (n - j) - 1) for j in range(n))


def camassa_holm_rhs(u, L):
    """u_t = -u u_x - d/dx (1 - d^2)^-1 (u^2 + u_x^2 / 2), coded with raw FFTs."""
    N = u.size
    k = np.fft.fftfreq(N, d=2 * L / N) * 2 * np.pi
    k_odd = k.copy()
    k_odd[N // 2] = 0.0
    ux = np.fft.ifft(1j * k_odd * np.fft.fft(u)).real
    P = np.fft.ifft(1j * k_odd * np.fft.fft(u * u + 0.5 * ux * ux) / (1 + k * k)).real
    return -u * ux - P
