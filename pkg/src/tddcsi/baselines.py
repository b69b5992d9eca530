"""Classical frequency-domain interpolators: complex linear and Wiener (LMMSE) with oracle statistics."""
import enum
from dataclasses import dataclass

import numpy as np

from . import kernels
from .airlink import PilotCsi, noise_variance

REGULARIZATION = 1e-10
MAX_CONDITION = 1e12


class CalibrationMode(enum.Enum):
    NONE = "none"
    ORACLE = "oracle"

    @classmethod
    def parse(cls, value):
        return value if isinstance(value, cls) else cls(str(value).lower())


def _pilot_values(pilot_csi):
    return np.asarray(pilot_csi.values if isinstance(pilot_csi, PilotCsi) else pilot_csi)


def linear_interp(pilot_csi, grid):
    """Piecewise-linear interpolation of real and imaginary parts over the full band.

    Subcarriers past the last pilot are extrapolated from the last two pilots.
    """
    values = _pilot_values(pilot_csi)
    if grid.n_pilots < 2:
        raise ValueError("linear interpolation needs at least two pilots")
    if values.shape[-1] != grid.n_pilots:
        raise ValueError(f"{values.shape[-1]} pilot values for a {grid.n_pilots}-pilot grid")
    flat = values.reshape(-1, grid.n_pilots)
    out = kernels.interp_linear(flat, grid.indices, grid.n_subcarriers)
    return out.reshape(values.shape[:-1] + (grid.n_subcarriers,))


def freq_correlation(pdp, delta_subcarriers, scs):
    """``r(delta) = sum_i p_i exp(-j*2*pi*delta*scs*tau_i)``; ``delta`` may be an array."""
    delta = np.asarray(delta_subcarriers, dtype=np.float64)
    phase = np.multiply.outer(delta * scs, pdp.delays)
    return np.exp(-2j * np.pi * phase) @ pdp.powers


@dataclass(frozen=True, eq=False)
class WienerResult:
    values: np.ndarray
    regularized: bool = False


def wiener_matrix(pdp, snr_db, grid, scs):
    """Interpolation matrix ``R_hp (R_pp + s2 I)^-1`` (N x N_p) and whether it needed regularizing.

    Statistics are normalized to unit channel power, so ``s2 = 10^(-snr/10)``;
    ``snr_db=None`` or ``inf`` gives ``s2 = 0``.
    """
    idx = grid.indices
    n = np.arange(grid.n_subcarriers)
    r_hp = freq_correlation(pdp, n[:, None] - idx[None, :], scs)
    r_pp = freq_correlation(pdp, idx[:, None] - idx[None, :], scs)
    s2 = 0.0 if snr_db is None else float(noise_variance(1.0, snr_db))
    a = r_pp + s2 * np.eye(len(idx))
    regularized = bool(np.linalg.cond(a) > MAX_CONDITION)
    if regularized:
        a = a + REGULARIZATION * np.eye(len(idx))
    # W = R_hp A^-1  <=>  A^H W^H = R_hp^H, and A is Hermitian
    w = np.linalg.solve(a, r_hp.conj().T).conj().T
    return w, regularized


def wiener_interp(pilot_csi, pdp, snr_db, grid, calib=CalibrationMode.NONE, chains=None, scs=30e3):
    """LMMSE interpolation of pilot estimates using the true class statistics.

    With ``calib=ORACLE`` the pilot estimates are first multiplied by the true
    reciprocity factor ``(r_dl*t_dl)/(r_ul*t_ul)`` at the pilot subcarriers.
    """
    calib = CalibrationMode.parse(calib)
    values = _pilot_values(pilot_csi)
    if grid.n_pilots < 1 or values.shape[-1] != grid.n_pilots:
        raise ValueError(f"{values.shape[-1]} pilot values for a {grid.n_pilots}-pilot grid")
    if calib is CalibrationMode.ORACLE:
        if chains is None:
            raise ValueError("oracle calibration needs the RF chain set")
        values = values * chains.reciprocity_factor()[grid.indices]
    w, regularized = wiener_matrix(pdp, snr_db, grid, scs)
    return WienerResult(values @ w.T, regularized)
