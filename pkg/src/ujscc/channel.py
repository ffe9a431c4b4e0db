"""Digital modulation over an AWGN channel.

Constellations are unit-average-power point sets in the real plane:
BPSK on the I axis and square Gray-labeled QAM for orders 4..256.
Codeword index i is mapped to constellation point i, corrupted by
circularly symmetric Gaussian noise of total variance sigma^2 =
P / 10^(snr_db/10), and detected by minimum Euclidean distance.
Indices are 0-based throughout.

The modulation order in use is picked from the channel SNR by fixed
dB boundaries placed where the incoming order's symbol error rate is
roughly 0.1; ``analytic_ser`` provides the closed-form SER used both
to justify those boundaries and as the oracle for the Monte-Carlo
estimator.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

SUPPORTED_ORDERS = (2, 4, 16, 64, 256)

# dB thresholds between adjacent modulation orders, inference side.
DEFAULT_BOUNDARIES = (5.0, 12.0, 20.0, 26.0)
# Same thresholds with outer training limits prepended/appended.
DEFAULT_TRAIN_BOUNDS = (0.0, 5.0, 12.0, 20.0, 26.0, 30.0)


@dataclass(frozen=True)
class Constellation:
    order: int
    points: np.ndarray  # (m, 2), unit average power

    @property
    def power(self) -> float:
        return float((self.points**2).sum(axis=1).mean())


def _gray_decode(g: int) -> int:
    b = 0
    while g:
        b ^= g
        g >>= 1
    return b


def make_constellation(m: int) -> Constellation:
    """Unit-power constellation of order m with a fixed Gray labeling.

    For square QAM the label's high/low bit halves Gray-encode the Q/I
    grid rows, so single-axis neighbor errors flip one label bit. Any
    fixed one-to-one labeling works once a codebook is learned around
    it; Gray keeps detection errors close in index space and pins one
    canonical choice.
    """
    if m == 2:
        return Constellation(2, np.array([[-1.0, 0.0], [1.0, 0.0]]))
    if m not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported modulation order {m}; choose from {SUPPORTED_ORDERS}")
    side = int(round(np.sqrt(m)))
    bits = side.bit_length() - 1
    scale = np.sqrt(3.0 / (2.0 * (m - 1)))
    points = np.empty((m, 2))
    for label in range(m):
        row = _gray_decode(label >> bits)
        col = _gray_decode(label & (side - 1))
        points[label, 0] = (2 * col - (side - 1)) * scale
        points[label, 1] = (2 * row - (side - 1)) * scale
    return Constellation(m, points)


@dataclass(frozen=True)
class SnrPolicy:
    """dB boundaries for order switching plus outer training limits."""

    boundaries: tuple[float, ...] = DEFAULT_BOUNDARIES
    train_bounds: tuple[float, ...] = DEFAULT_TRAIN_BOUNDS

    def __post_init__(self):
        if list(self.boundaries) != sorted(self.boundaries):
            raise ValueError("SNR boundaries must be strictly increasing")
        if list(self.train_bounds) != sorted(self.train_bounds):
            raise ValueError("training SNR bounds must be strictly increasing")
        if len(self.train_bounds) != len(self.boundaries) + 2:
            raise ValueError("train_bounds must extend boundaries by one on each side")

    @property
    def num_orders(self) -> int:
        return len(self.boundaries) + 1

    def band(self, k: int) -> tuple[float, float]:
        """Training SNR interval [low, high) of order index k (1-based)."""
        return self.train_bounds[k - 1], self.train_bounds[k]


@dataclass(frozen=True)
class ModulationPlan:
    """The orders in play, their codeword dimensions, and the switch policy."""

    orders: tuple[int, ...]
    dims: tuple[int, ...]
    policy: SnrPolicy

    def __post_init__(self):
        if len(self.orders) != len(self.dims):
            raise ValueError("orders and dims must align")
        if len(self.orders) != self.policy.num_orders:
            raise ValueError("policy boundary count does not match order count")
        if list(self.dims) != sorted(set(self.dims)):
            raise ValueError("codeword dimensions must be strictly increasing")

    @property
    def K(self) -> int:
        return len(self.orders)

    def constellation(self, k: int) -> Constellation:
        return make_constellation(self.orders[k - 1])


def default_plan(dims: tuple[int, ...]) -> ModulationPlan:
    """Plan over the first len(dims) supported orders with the standard
    boundaries (outer training limits kept at the standard extremes)."""
    k = len(dims)
    if not 2 <= k <= len(SUPPORTED_ORDERS):
        raise ValueError(f"need between 2 and {len(SUPPORTED_ORDERS)} orders")
    bounds = DEFAULT_BOUNDARIES[: k - 1]
    train = (DEFAULT_TRAIN_BOUNDS[0],) + bounds + (DEFAULT_TRAIN_BOUNDS[-1],)
    return ModulationPlan(SUPPORTED_ORDERS[:k], tuple(dims), SnrPolicy(bounds, train))


def select_order(snr_db: float, policy: SnrPolicy) -> int:
    """1-based order index for a channel SNR: lowest order below the first
    boundary, highest at or above the last, else the bracketing band."""
    k = 1
    for b in policy.boundaries:
        if snr_db < b:
            return k
        k += 1
    return k


def noise_variance(snr_db: float, power: float = 1.0) -> float:
    return power / 10.0 ** (snr_db / 10.0)


@dataclass
class ChannelRealization:
    snr_db: float
    noise_var: float
    rng: np.random.Generator


def channel_realization(
    snr_db: float, rng: np.random.Generator, power: float = 1.0
) -> ChannelRealization:
    return ChannelRealization(snr_db, noise_variance(snr_db, power), rng)


def modulate(z: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Index vector (0-based) -> symbol sequence (len(z), 2)."""
    z = np.asarray(z)
    if z.size and (z.min() < 0 or z.max() >= constellation.order):
        raise ValueError(
            f"index out of range for order {constellation.order}: "
            f"[{z.min()}, {z.max()}]"
        )
    return constellation.points[z]


def transmit(s: np.ndarray, ch: ChannelRealization) -> np.ndarray:
    """Add circular Gaussian noise: variance noise_var/2 per real component."""
    if ch.noise_var == 0.0:
        return s.copy()
    return s + ch.rng.normal(0.0, np.sqrt(ch.noise_var / 2.0), size=s.shape)


_CHUNK = 32768  # rows per score block, bounds the (rows, m) temporary


def nearest_rows(y: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Index of the closest row of c (squared Euclidean) for each row of y.

    Scores use the distance expansion ||c_j||^2 - 2 y.c_j (the ||y||^2
    term is constant per row); argmin takes the first minimum, so exact
    ties go to the smaller index.
    """
    norms = np.einsum("md,md->m", c, c)
    out = np.empty(y.shape[0], dtype=np.int64)
    for lo in range(0, y.shape[0], _CHUNK):
        scores = y[lo : lo + _CHUNK] @ (-2.0 * c.T)
        scores += norms
        out[lo : lo + _CHUNK] = np.argmin(scores, axis=1)
    return out


def detect(s_hat: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Minimum-distance detection; ties go to the smaller index."""
    return nearest_rows(s_hat, constellation.points)


def measure_ser(
    m: int, snr_db: float, trials: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte-Carlo symbol error rate and its binomial standard error."""
    c = make_constellation(m)
    ch = channel_realization(snr_db, rng)
    z = rng.integers(0, m, size=trials)
    z_hat = detect(transmit(modulate(z, c), ch), c)
    ser = float(np.mean(z_hat != z))
    std_err = float(np.sqrt(ser * (1.0 - ser) / trials))
    return ser, std_err


def analytic_ser(m: int, snr_db: float) -> float:
    """Closed-form SER on AWGN: Q(sqrt(2*g)) for BPSK and the square-QAM
    expression 1 - (1 - 2(1-1/sqrt(M)) Q(sqrt(3g/(M-1))))^2, g linear SNR."""
    if m not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported modulation order {m}")
    g = 10.0 ** (snr_db / 10.0)
    if m == 2:
        return float(_qfunc(np.sqrt(2.0 * g)))
    root_m = np.sqrt(m)
    per_axis = 2.0 * (1.0 - 1.0 / root_m) * _qfunc(np.sqrt(3.0 * g / (m - 1)))
    return float(1.0 - (1.0 - per_axis) ** 2)


def _qfunc(x):
    return 0.5 * erfc(x / np.sqrt(2.0))
