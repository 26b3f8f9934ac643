"""AMC transmission modes and the fitted packet-error-rate model."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import yaml

from .errors import TableParseError, ValidationError

DEFAULT_TABLE = "hiperlan2.yaml"
# Four-decimal transcription leaves the two PER branches up to ~3e-4 apart at the seam.
SEAM_TOL = 1e-3


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class AmcMode:
    """One transmission mode: rate R_n and PER fit (a_n, g_n, gamma_p).

    ``gamma_p`` is linear SNR; below it the packet is assumed lost.
    """

    index: int
    rate: float
    fit_a: float
    fit_g: float
    fit_gamma_p: float
    name: str = ""

    def __post_init__(self):
        where = f"mode {self.index}"
        if not self.rate > 0:
            raise ValidationError(f"{where}: rate must be > 0, got {self.rate}")
        if not self.fit_a >= 1:
            raise ValidationError(f"{where}: fit a must be >= 1, got {self.fit_a}")
        if not self.fit_g > 0:
            raise ValidationError(f"{where}: fit g must be > 0, got {self.fit_g}")
        if not self.fit_gamma_p >= 0:
            raise ValidationError(f"{where}: gamma_p must be >= 0, got {self.fit_gamma_p}")

    @property
    def seam_value(self) -> float:
        """Fitted branch evaluated at gamma_p; 1 for a perfectly continuous fit."""
        return self.fit_a * math.exp(-self.fit_g * self.fit_gamma_p)

    def snr_for_per(self, target: float) -> float:
        """Post-adaptation SNR at which the fitted branch equals ``target``."""
        return math.log(self.fit_a / target) / self.fit_g


@dataclass(frozen=True)
class AmcModeTable:
    modes: tuple
    packet_bits: int = 1080

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.modes:
            raise ValidationError("mode table is empty")
        if not (isinstance(self.packet_bits, (int, np.integer)) and self.packet_bits > 0):
            raise ValidationError(f"packet_bits must be a positive integer, got {self.packet_bits!r}")
        for k, mode in enumerate(self.modes, start=1):
            if mode.index != k:
                raise ValidationError(f"mode {mode.index}: indices must be contiguous from 1 (expected {k})")
            if k > 1 and not mode.rate > self.modes[k - 2].rate:
                raise ValidationError(
                    f"mode {mode.index}: rate {mode.rate} does not exceed rate "
                    f"{self.modes[k - 2].rate} of mode {k - 1}"
                )

    def __len__(self):
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def __getitem__(self, i):
        return self.modes[i]

    @property
    def rates(self) -> np.ndarray:
        return np.array([m.rate for m in self.modes])

    @property
    def fit_a(self) -> np.ndarray:
        return np.array([m.fit_a for m in self.modes])

    @property
    def fit_g(self) -> np.ndarray:
        return np.array([m.fit_g for m in self.modes])

    @property
    def gamma_p(self) -> np.ndarray:
        return np.array([m.fit_gamma_p for m in self.modes])

    def subset(self, indices: Sequence[int]) -> "AmcModeTable":
        """Reduced table built from 1-based mode indices, renumbered from 1."""
        picked = []
        for k, i in enumerate(indices, start=1):
            m = self.modes[i - 1]
            picked.append(AmcMode(k, m.rate, m.fit_a, m.fit_g, m.fit_gamma_p, m.name))
        return AmcModeTable(tuple(picked), self.packet_bits)

    def scale_rates(self, c: float) -> "AmcModeTable":
        return AmcModeTable(
            tuple(AmcMode(m.index, c * m.rate, m.fit_a, m.fit_g, m.fit_gamma_p, m.name) for m in self.modes),
            self.packet_bits,
        )


def per_awgn(mode: AmcMode, post_snr, pre_snr=None):
    """Packet error rate of ``mode`` at the given post-adaptation SNR.

    Returns 1 below ``gamma_p`` and ``min(1, a*exp(-g*snr))`` otherwise. The
    below-``gamma_p`` test uses ``pre_snr`` when given (the received SNR at
    nominal power selects the mode; the power-controlled SNR enters the fit).
    Works elementwise on arrays.
    """
    post = np.asarray(post_snr, dtype=float)
    gate = post if pre_snr is None else np.asarray(pre_snr, dtype=float)
    fit = np.minimum(1.0, mode.fit_a * np.exp(-mode.fit_g * post))
    out = np.where(gate < mode.fit_gamma_p, 1.0, fit)
    return float(out) if out.ndim == 0 else out


def power_gains(table: AmcModeTable, target_per: float) -> np.ndarray:
    """SNR each mode must reach to hit ``target_per``: ln(a_n / target) / g_n."""
    a = table.fit_a
    bad = np.nonzero(a <= target_per)[0]
    if bad.size:
        n = int(bad[0]) + 1
        raise ValidationError(
            f"mode {n}: a_n = {a[bad[0]]} <= target PER {target_per}; the mode cannot be pinned to the target"
        )
    return np.log(a / target_per) / table.fit_g


def gain_slopes(table: AmcModeTable, target_per: float) -> np.ndarray:
    """Sequence (h_n - h_{n-1}) / (R_n - R_{n-1}) with h_0 = R_0 = 0."""
    h = power_gains(table, target_per)
    return np.diff(h, prepend=0.0) / np.diff(table.rates, prepend=0.0)


def practical_range_ok(table: AmcModeTable, target_per: float) -> bool:
    """True when the gain slopes strictly increase, which keeps KKT levels ordered."""
    return bool(np.all(np.diff(gain_slopes(table, target_per)) > 0))


def check_table(table: AmcModeTable, p_loss: float = 1e-3, num: int = 200) -> dict:
    """Scan target PERs in (p_loss, 1) for the ordered-slopes condition.

    The table is flagged, never rejected. Returned dict holds the scan grid,
    a boolean per target, and the seam value of every mode.
    """
    grid = np.logspace(math.log10(p_loss), 0.0, num + 2)[1:-1]
    ok = np.array([practical_range_ok(table, t) for t in grid])
    return {
        "targets": grid,
        "ok": ok,
        "all_ok": bool(ok.all()),
        "seams": np.array([m.seam_value for m in table]),
    }


def _parse_mode(raw, k):
    if not isinstance(raw, dict):
        raise TableParseError(f"mode entry {k}: expected a mapping, got {type(raw).__name__}")
    missing = [key for key in ("rate_bits_per_symbol", "a", "g", "gamma_p_db") if key not in raw]
    if missing:
        raise TableParseError(f"mode {raw.get('index', k)}: missing field(s) {', '.join(missing)}")
    try:
        return AmcMode(
            index=int(raw.get("index", k)),
            rate=float(raw["rate_bits_per_symbol"]),
            fit_a=float(raw["a"]),
            fit_g=float(raw["g"]),
            fit_gamma_p=float(db_to_linear(float(raw["gamma_p_db"]))),
            name=str(raw.get("name", "")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise TableParseError(f"mode {raw.get('index', k)}: {exc}") from exc


def load_mode_table(source: Union[str, Path, dict, None] = None, seam_tol: float = SEAM_TOL) -> AmcModeTable:
    """Load a mode table from a YAML path, YAML text, or an already-parsed dict.

    ``None`` or ``"default"`` loads the bundled HIPERLAN/2 table. Emits a
    ``UserWarning`` for every mode whose fitted branch exceeds 1 by more than
    ``seam_tol`` at gamma_p.
    """
    if source is None or source == "default":
        text = resources.files("carqlink.data").joinpath(DEFAULT_TABLE).read_text()
        doc = yaml.safe_load(text)
    elif isinstance(source, dict):
        doc = source
    else:
        if isinstance(source, Path) or "\n" not in str(source):
            try:
                text = Path(source).read_text()
            except OSError as exc:
                raise TableParseError(f"mode table: cannot read {source}: {exc}") from exc
        else:
            text = str(source)
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise TableParseError(f"mode table: {exc}") from exc
    if not isinstance(doc, dict) or "modes" not in doc:
        raise TableParseError("mode table: expected a mapping with a 'modes' list")
    if "packet_bits" not in doc:
        raise TableParseError("mode table: missing 'packet_bits'")
    if not isinstance(doc["modes"], list):
        raise TableParseError("mode table: 'modes' must be a list")
    modes = tuple(_parse_mode(raw, k) for k, raw in enumerate(doc["modes"], start=1))
    try:
        packet_bits = int(doc["packet_bits"])
    except (TypeError, ValueError) as exc:
        raise TableParseError(f"mode table: packet_bits: {exc}") from exc
    table = AmcModeTable(modes, packet_bits)
    for m in table:
        if m.seam_value > 1.0 + seam_tol:
            warnings.warn(
                f"mode {m.index}: a*exp(-g*gamma_p) = {m.seam_value:.4f} > 1; "
                "the two PER branches disagree at gamma_p",
                stacklevel=2,
            )
    return table
