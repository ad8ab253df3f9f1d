"""Synchronous DS-CDMA uplink model.

Builds the chip-rate observation window of a multiuser uplink with
multipath symbol-rate block fading: spreading codes, banded channel
convolution matrices, BPSK and differential modulation, the linear
receiver front end and hard detection.

The observation for symbol ``i`` spans ``M = N + L - 1`` chips, where
``N`` is the processing gain and ``L`` the number of paths.  With
multipath, the tail of symbol ``i-1`` and the precursor of symbol
``i+1`` leak into the window; both contributions can be disabled for
unit testing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fading import FadingSequence

__all__ = [
    "SpreadingCode",
    "ChannelScenario",
    "UserParams",
    "ReceivedVector",
    "SymbolStream",
    "random_code",
    "build_channel_matrix",
    "code_convolution_operator",
    "isi_tail",
    "isi_precursor",
    "modulate_coherent",
    "modulate_differential",
    "synthesize_received",
    "received_block",
    "filter_output",
    "detect_coherent",
    "detect_differential",
]

_NORM_TOL = 1e-12


@dataclass(frozen=True)
class SpreadingCode:
    """Unit-norm binary spreading sequence with chips ``+-1/sqrt(N)``."""

    chips: np.ndarray

    def __post_init__(self) -> None:
        chips = np.asarray(self.chips, dtype=np.float64)
        object.__setattr__(self, "chips", chips)
        if chips.ndim != 1 or chips.size < 2:
            raise ValueError("code must be a vector of length at least 2")
        if abs(np.linalg.norm(chips) - 1.0) > _NORM_TOL:
            raise ValueError("code must have unit Euclidean norm")

    @property
    def gain(self) -> int:
        return self.chips.size


def random_code(gain: int, rng: np.random.Generator) -> SpreadingCode:
    """Draw a random ``+-1/sqrt(gain)`` spreading code."""
    if gain < 2:
        raise ValueError("gain must be at least 2")
    signs = 2.0 * rng.integers(0, 2, size=gain) - 1.0
    return SpreadingCode(chips=signs / np.sqrt(gain))


@dataclass(frozen=True)
class UserParams:
    """Amplitude, code and fading process of one uplink user."""

    amplitude: float
    code: SpreadingCode
    fading: FadingSequence

    def __post_init__(self) -> None:
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")


@dataclass(frozen=True)
class ReceivedVector:
    """One chip-rate observation window of length ``N + L - 1``."""

    samples: np.ndarray
    symbol_index: int

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.complex128)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise ValueError("samples must be a vector")


@dataclass(frozen=True)
class SymbolStream:
    """Data symbols and the transmitted symbols they map to.

    In coherent mode ``transmitted`` equals ``data``.  In differential
    mode ``transmitted`` carries a reference symbol at index 0 and
    ``transmitted[i] = data[i-1] * transmitted[i-1]`` for ``i >= 1``:
    ``data[j]`` is the symbol carried by the sign transition between
    transmitted symbols ``j`` and ``j + 1``.
    """

    data: np.ndarray
    transmitted: np.ndarray
    mode: str

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        transmitted = np.asarray(self.transmitted, dtype=np.float64)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "transmitted", transmitted)
        for name, values in (("data", data), ("transmitted", transmitted)):
            if not np.all(np.abs(values) == 1.0):
                raise ValueError(f"{name} symbols must be +-1")
        if self.mode == "coherent":
            if not np.array_equal(data, transmitted):
                raise ValueError("coherent stream must transmit the data unchanged")
        elif self.mode == "differential":
            if transmitted.size != data.size + 1:
                raise ValueError("differential stream must carry a leading reference")
            if not np.array_equal(transmitted[1:], data * transmitted[:-1]):
                raise ValueError("differential recursion violated")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")


def modulate_coherent(data) -> SymbolStream:
    """Wrap ``+-1`` data as plain BPSK symbols."""
    data = np.asarray(data, dtype=np.float64)
    if data.size == 0:
        raise ValueError("data must be nonempty")
    return SymbolStream(data=data, transmitted=data.copy(), mode="coherent")


def modulate_differential(data, reference: float = 1.0) -> SymbolStream:
    """Differentially encode ``+-1`` data onto a reference symbol.

    ``transmitted[0]`` is the reference; each later symbol is the product
    of the previous one and the data symbol it carries, so detection from
    the ratio of adjacent symbols inverts the mapping.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.size == 0:
        raise ValueError("data must be nonempty")
    if reference not in (-1.0, 1.0):
        raise ValueError("reference must be +-1")
    transmitted = np.empty(data.size + 1)
    transmitted[0] = reference
    transmitted[1:] = reference * np.cumprod(data)
    return SymbolStream(data=data, transmitted=transmitted, mode="differential")


def build_channel_matrix(taps, code_length: int) -> np.ndarray:
    """Banded convolution matrix of an ``L``-tap channel.

    Entry ``(m, n)`` equals ``taps[m - n]`` when ``0 <= m - n < L`` and is
    zero otherwise; the result has shape ``(N + L - 1, N)`` and maps a
    code vector to its chip-rate convolution with the taps.
    """
    taps = np.asarray(taps, dtype=np.complex128)
    if taps.ndim != 1 or taps.size == 0:
        raise ValueError("taps must be a nonempty vector")
    if code_length < 2:
        raise ValueError("code_length must be at least 2")
    num_taps = taps.size
    matrix = np.zeros((code_length + num_taps - 1, code_length), dtype=np.complex128)
    cols = np.arange(code_length)
    for lag, tap in enumerate(taps):
        matrix[cols + lag, cols] = tap
    return matrix


def code_convolution_operator(code: SpreadingCode, num_taps: int) -> np.ndarray:
    """Matrix ``C`` with ``C @ taps = convolve(taps, code.chips)``.

    Shape ``(N + L - 1, L)``; applying it to a tap vector gives the
    received signature of one symbol, so a whole packet of signatures is
    one matrix product with the fading gains.
    """
    if num_taps < 1:
        raise ValueError("num_taps must be at least 1")
    gain = code.gain
    op = np.zeros((gain + num_taps - 1, num_taps))
    for lag in range(num_taps):
        op[lag:lag + gain, lag] = code.chips
    return op


def isi_tail(signature: np.ndarray, gain: int) -> np.ndarray:
    """Part of a symbol's signature that spills into the next window."""
    out = np.zeros_like(signature)
    out[: signature.size - gain] = signature[gain:]
    return out


def isi_precursor(signature: np.ndarray, gain: int) -> np.ndarray:
    """Part of a symbol's signature that spills into the previous window."""
    out = np.zeros_like(signature)
    out[gain:] = signature[: signature.size - gain]
    return out


def synthesize_received(
    users,
    streams,
    i: int,
    noise_var: float,
    rng: np.random.Generator | None = None,
    include_isi: bool = True,
) -> ReceivedVector:
    """Synthesize the uplink observation for symbol ``i``.

    Sums every user's faded signature weighted by its transmitted symbol,
    adds the tail of symbol ``i-1`` and the precursor of symbol ``i+1``
    when ``include_isi`` is set (absent neighbors contribute zero), and
    adds circular complex Gaussian noise of covariance ``noise_var * I``.
    User 0 is the desired user by convention.
    """
    if len(users) == 0 or len(users) != len(streams):
        raise ValueError("users and streams must be nonempty and match")
    if noise_var < 0:
        raise ValueError("noise variance must be nonnegative")
    gain = users[0].code.gain
    paths = users[0].fading.gains.shape[0]
    for user in users:
        if user.code.gain != gain or user.fading.gains.shape[0] != paths:
            raise ValueError("all users must share the processing gain and path count")
    if i < 0:
        raise ValueError("symbol index must be nonnegative")
    window = gain + paths - 1
    total = np.zeros(window, dtype=np.complex128)
    for user, stream in zip(users, streams):
        symbols = stream.transmitted
        gains = user.fading.gains
        if i >= symbols.size or i >= gains.shape[1]:
            raise ValueError(f"symbol index {i} outside stream or fading range")
        operator = user.amplitude * code_convolution_operator(user.code, paths)
        total += symbols[i] * (operator @ gains[:, i])
        if include_isi:
            if i - 1 >= 0:
                total += symbols[i - 1] * isi_tail(operator @ gains[:, i - 1], gain)
            if i + 1 < min(symbols.size, gains.shape[1]):
                total += symbols[i + 1] * isi_precursor(operator @ gains[:, i + 1], gain)
    if noise_var > 0:
        if rng is None:
            raise ValueError("rng is required when noise_var > 0")
        scale = np.sqrt(noise_var / 2.0)
        total = total + scale * (rng.standard_normal(window) + 1j * rng.standard_normal(window))
    return ReceivedVector(samples=total, symbol_index=i)


def received_block(signatures, symbols, gain: int, noise=None, include_isi: bool = True) -> np.ndarray:
    """Vectorized packet synthesis from per-symbol signatures.

    ``signatures[k]`` is the ``(M, T)`` array of user ``k``'s faded
    signatures (amplitude folded in) and ``symbols[k]`` the matching
    ``(T,)`` transmitted symbols.  Column ``i`` of the result equals
    :func:`synthesize_received` for symbol ``i`` with the same noise.
    """
    first = np.asarray(signatures[0])
    window, length = first.shape
    r = np.zeros((window, length), dtype=np.complex128)
    for sig, b in zip(signatures, symbols):
        sig = np.asarray(sig)
        b = np.asarray(b)
        if sig.shape != (window, length) or b.shape != (length,):
            raise ValueError("signature/symbol shapes are inconsistent")
        x = sig * b
        r += x
        if include_isi and window > gain:
            r[: window - gain, 1:] += x[gain:, :-1]
            r[gain:, :-1] += x[: window - gain, 1:]
    if noise is not None:
        r = r + noise
    return r


def filter_output(w: np.ndarray, r: ReceivedVector) -> complex:
    """Linear receiver output ``w^H r``."""
    samples = r.samples if isinstance(r, ReceivedVector) else np.asarray(r)
    w = np.asarray(w)
    if w.shape != samples.shape:
        raise ValueError("filter and observation dimensions differ")
    return complex(np.vdot(w, samples))


def detect_coherent(z: complex) -> int:
    """Hard BPSK decision; an exact tie maps to +1."""
    return 1 if z.real >= 0 else -1


def detect_differential(z_now: complex, z_prev: complex) -> int:
    """Hard decision on the phase ratio of adjacent filter outputs."""
    return detect_coherent(z_now * np.conj(z_prev))


@dataclass(frozen=True)
class ChannelScenario:
    """Physical configuration of one uplink simulation cell.

    Amplitudes default to unity for every user; the signal-to-noise ratio
    is ``amplitude**2 / noise_variance`` with unit total channel power.
    """

    users: int
    gain: int
    paths: int
    snr_db: float
    fading_rate: float
    include_isi: bool = True
    num_oscillators: int = 64
    amplitude: float = 1.0
    interferer_amplitude: float = 1.0
    power_profile: tuple[float, ...] | None = None
    code_seed: int = 0

    def __post_init__(self) -> None:
        if self.users < 1:
            raise ValueError("users must be at least 1")
        if self.gain < 2:
            raise ValueError("gain must be at least 2")
        if self.paths < 1:
            raise ValueError("paths must be at least 1")
        if self.fading_rate < 0:
            raise ValueError("fading_rate must be nonnegative")
        if self.amplitude <= 0 or self.interferer_amplitude <= 0:
            raise ValueError("amplitudes must be positive")

    @property
    def window(self) -> int:
        return self.gain + self.paths - 1

    @property
    def noise_variance(self) -> float:
        return self.amplitude**2 / 10.0 ** (self.snr_db / 10.0)

    def user_amplitude(self, k: int) -> float:
        return self.amplitude if k == 0 else self.interferer_amplitude

    def codes(self) -> list[SpreadingCode]:
        """The scenario's fixed spreading codes, drawn from ``code_seed``."""
        rng = np.random.default_rng(self.code_seed)
        return [random_code(self.gain, rng) for _ in range(self.users)]
