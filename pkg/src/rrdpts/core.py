"""Protocol vocabulary: parameters, basis layouts, delay sets and sifting geometry.

Bins are numbered 1..2L and pulses (occupied bins) 1..L in time order, so a
layout or an announced pair can be read straight against the state
definitions. A delay of ``d`` bins makes the pulse in bin ``j - d`` meet the
pulse in bin ``j``; the *click bin* of that interference is ``j``, the later
of the two.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache


class ParameterError(ValueError):
    """Raised for protocol parameters outside their valid domain."""


class InvalidWindow(ValueError):
    """A click landed outside every interference window of the layout."""


class Basis(str, enum.Enum):
    X = "X"
    Z = "Z"


def check_L(L: int) -> int:
    if isinstance(L, bool) or not isinstance(L, int) or L < 4 or L % 2:
        raise ParameterError(f"L must be an even integer >= 4, got {L!r}")
    return L


@dataclass(frozen=True)
class ProtocolParams:
    """Physical and protocol constants for one operating point.

    ``e_mis`` is the canonical misalignment; the interference visibility is
    ``1 - 2*e_mis``. ``tau_ps`` is carried for reporting only.
    """

    L: int = 8
    mu: float = 0.1
    loss_db: float = 10.0
    eta_d: float = 0.85
    p_d: float = 1.6e-8
    e_mis: float = 0.015
    tau_ps: float = 1000.0

    def __post_init__(self):
        check_L(self.L)
        if not self.mu >= 0 or math.isinf(self.mu):
            raise ParameterError(f"mu must be finite and >= 0, got {self.mu}")
        if not self.loss_db >= 0 or math.isinf(self.loss_db):
            raise ParameterError(f"loss_db must be finite and >= 0, got {self.loss_db}")
        if not 0 < self.eta_d <= 1:
            raise ParameterError(f"eta_d must lie in (0, 1], got {self.eta_d}")
        if not 0 <= self.p_d < 1:
            raise ParameterError(f"p_d must lie in [0, 1), got {self.p_d}")
        if not 0 <= self.e_mis <= 0.5:
            raise ParameterError(f"e_mis must lie in [0, 0.5], got {self.e_mis}")
        if not self.eta > 0:
            raise ParameterError(f"loss_db={self.loss_db} underflows the transmission")

    @property
    def transmission(self) -> float:
        return 10.0 ** (-self.loss_db / 10.0)

    @property
    def eta(self) -> float:
        """Overall detection probability per photon, channel times detector."""
        return self.transmission * self.eta_d

    @property
    def visibility(self) -> float:
        return 1.0 - 2.0 * self.e_mis

    def replace(self, **changes) -> "ProtocolParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class DelayChoice:
    basis: Basis
    r: int

    def __post_init__(self):
        object.__setattr__(self, "basis", Basis(self.basis))

    def delay_bins(self) -> int:
        return delay_bins(self.basis, self.r)


@dataclass(frozen=True)
class PacketSpec:
    """One transmitted packet. ``phase_bits[k]`` is the phase of pulse k+1."""

    basis: Basis
    time_bit: int
    phase_bits: tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "basis", Basis(self.basis))
        if self.time_bit not in (0, 1):
            raise ParameterError(f"time_bit must be 0 or 1, got {self.time_bit!r}")
        bits = tuple(int(b) for b in self.phase_bits)
        if any(b not in (0, 1) for b in bits):
            raise ParameterError("phase bits must be 0 or 1")
        object.__setattr__(self, "phase_bits", bits)
        check_L(len(bits))

    @property
    def L(self) -> int:
        return len(self.phase_bits)

    def bins(self) -> tuple[int, ...]:
        return occupied_bins(self.basis, self.time_bit, self.L)

    def relative_phase(self, a: int, b: int) -> int:
        """Phase bit shared by pulses a and b (1-indexed)."""
        return self.phase_bits[a - 1] ^ self.phase_bits[b - 1]


def occupied_bins(basis: Basis | str, time_bit: int, L: int) -> tuple[int, ...]:
    """Bins carrying a pulse, in increasing order.

    >>> occupied_bins("Z", 0, 4)
    (1, 2, 5, 6)
    """
    check_L(L)
    if time_bit not in (0, 1):
        raise ParameterError(f"time_bit must be 0 or 1, got {time_bit!r}")
    return _occupied_bins(Basis(basis), int(time_bit), L)


@lru_cache(maxsize=None)
def _occupied_bins(basis: Basis, time_bit: int, L: int) -> tuple[int, ...]:
    if basis is Basis.X:
        # X0 -> even bins, X1 -> odd bins
        return tuple(range(2 - time_bit, 2 * L + 1, 2))
    # Z0 -> bins 1,2 (mod 4); Z1 -> bins 3,0 (mod 4)
    offset = 2 * time_bit
    return tuple(b for k in range(L // 2) for b in (4 * k + 1 + offset, 4 * k + 2 + offset))


def valid_delays(basis: Basis | str, L: int) -> tuple[int, ...]:
    """Delay indices Bob may pick. r = 1 is never used in the Z basis."""
    check_L(L)
    return _valid_delays(Basis(basis), L)


@lru_cache(maxsize=None)
def _valid_delays(basis: Basis, L: int) -> tuple[int, ...]:
    start = 1 if basis is Basis.X else 2
    return tuple(range(start, L))


def check_delay(basis: Basis | str, r: int, L: int) -> int:
    basis = Basis(basis)
    if basis is Basis.Z and r == 1:
        raise ParameterError("r = 1 is excluded in the Z basis")
    if r not in valid_delays(basis, L):
        raise ParameterError(f"r={r!r} is not a valid {basis.value} delay for L={L}")
    return r


def delay_bins(basis: Basis | str, r: int) -> int:
    """Interferometer delay in units of one time bin: 2r (X) or 2r-1 (Z)."""
    return 2 * r if Basis(basis) is Basis.X else 2 * r - 1


def window_count(basis: Basis | str, r: int, L: int) -> int:
    """Interference windows per time-bit layout for delay r.

    This is L - r for X; for Z it is L/2 - r/2 (even r) or L/2 - (r-1)/2
    (odd r).
    """
    basis = Basis(basis)
    check_delay(basis, r, L)
    if basis is Basis.X:
        return L - r
    return L // 2 - r // 2 if r % 2 == 0 else L // 2 - (r - 1) // 2


@lru_cache(maxsize=None)
def interference_windows(basis: Basis | str, time_bit: int, r: int, L: int) -> dict[int, tuple[int, int]]:
    """Map each click bin of the layout to the pulse ordinals meeting there."""
    basis = Basis(basis)
    check_delay(basis, r, L)
    d = delay_bins(basis, r)
    bins = occupied_bins(basis, time_bit, L)
    ordinal = {b: k + 1 for k, b in enumerate(bins)}
    return {b + d: (ordinal[b], ordinal[b + d]) for b in bins if b + d in ordinal}


def interfering_indices(basis: Basis | str, time_bit: int, r: int, click_bin: int, L: int) -> tuple[int, int]:
    """Pulse ordinals (a, b), a < b, that interfered to produce ``click_bin``.

    Only ordinals are returned; the ordinals are identical for both time-bit
    layouts, so the announcement carries no time information.

    Raises:
        InvalidWindow: if no two pulses of the layout meet at ``click_bin``.
    """
    windows = interference_windows(basis, time_bit, r, L)
    try:
        return windows[click_bin]
    except KeyError:
        raise InvalidWindow(
            f"bin {click_bin} is not an interference window for "
            f"{Basis(basis).value}{time_bit}, r={r}, L={L}"
        ) from None


@lru_cache(maxsize=None)
def observed_windows(basis: Basis | str, r: int, L: int) -> tuple[tuple[int, int], ...]:
    """All (click_bin, decoded time bit) pairs Bob watches for one delay, in bin order."""
    out = []
    for tb in (0, 1):
        out.extend((b, tb) for b in interference_windows(basis, tb, r, L))
    return tuple(sorted(out))


def decode_time_bit(basis: Basis | str, r: int, click_bin: int, L: int) -> int:
    """Time bit Bob infers from the window in which he saw the click."""
    for tb in (0, 1):
        if click_bin in interference_windows(basis, tb, r, L):
            return tb
    raise InvalidWindow(f"bin {click_bin} is not observed for {Basis(basis).value}, r={r}, L={L}")
