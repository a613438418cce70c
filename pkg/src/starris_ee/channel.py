"""Seeded random channel generation and channel fixture I/O.

Small-scale fading is Rayleigh: every matrix entry is drawn i.i.d. as a
circularly-symmetric complex Gaussian with unit variance, then scaled by
the square root of a log-distance path loss
PL(d) = 10^(-ref_path_loss_db / 10) * d^(-path_loss_exponent).

Randomness comes from numpy's Philox counter-based generator keyed directly
by the 64-bit seed, so an identical (seed, dims, geometry, loss) tuple
reproduces the same channels on any platform. Draw order: H real part
(row-major), H imaginary part, then per user k = 0..K-1 the real then
imaginary parts of g_k.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .system_model import REFLECTION, TRANSMISSION, SystemDims, UserSideLabels

DEFAULT_PATH_LOSS_EXPONENT = 2.2
DEFAULT_REF_PATH_LOSS_DB = 30.0


@dataclass(frozen=True)
class Geometry:
    """Positions in meters plus the surface plane normal.

    The side of the plane a user falls on decides its label: nonnegative
    dot product of (user - ris_position) with ris_plane_normal means the
    reflection side. The default normal points from the surface back toward
    the base station so the BS sits in the reflection half-space.
    """

    bs_position: np.ndarray
    ris_position: np.ndarray
    user_positions: list
    ris_plane_normal: np.ndarray = field(
        default_factory=lambda: np.array([-1.0, 0.0, 0.0])
    )

    def __post_init__(self):
        object.__setattr__(self, "bs_position", np.asarray(self.bs_position, float))
        object.__setattr__(self, "ris_position", np.asarray(self.ris_position, float))
        object.__setattr__(
            self, "user_positions", [np.asarray(u, float) for u in self.user_positions]
        )
        normal = np.asarray(self.ris_plane_normal, float)
        if not np.all(np.isfinite(normal)):
            raise ValueError("plane normal must be finite")
        norm = np.linalg.norm(normal)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError("plane normal must have unit length")
        object.__setattr__(self, "ris_plane_normal", normal)
        for p in [self.bs_position, self.ris_position] + list(self.user_positions):
            if p.shape != (3,) or not np.all(np.isfinite(p)):
                raise ValueError("positions must be finite 3-vectors")

    def side_label(self, k):
        d = float(np.dot(self.user_positions[k] - self.ris_position, self.ris_plane_normal))
        return REFLECTION if d >= 0.0 else TRANSMISSION

    def side_labels(self):
        return UserSideLabels([self.side_label(k) for k in range(len(self.user_positions))])


def default_geometry(num_users):
    """BS at (0,0,10), surface at (50,0,10), users on a 5 m circle around (50,5,1.5).

    Users are spread at angles 2*pi*k/K in the x-y plane, which puts them on
    both sides of the surface plane for K >= 2.
    """
    angles = 2.0 * np.pi * np.arange(num_users) / num_users
    center = np.array([50.0, 5.0, 1.5])
    users = [
        center + 5.0 * np.array([np.cos(a), np.sin(a), 0.0]) for a in angles
    ]
    return Geometry(
        bs_position=np.array([0.0, 0.0, 10.0]),
        ris_position=np.array([50.0, 0.0, 10.0]),
        user_positions=users,
    )


@dataclass
class ChannelSet:
    """One channel realization: H (N x M), per-user g vectors and side labels."""

    H: np.ndarray
    g: list
    side_labels: UserSideLabels

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=complex)
        self.g = [np.asarray(gk, dtype=complex).reshape(-1) for gk in self.g]
        if self.H.ndim != 2:
            raise ValueError("H must be a matrix")
        n = self.H.shape[0]
        for gk in self.g:
            if gk.shape != (n,):
                raise ValueError(
                    f"g vectors must have length {n} to match H, got {gk.shape}"
                )
        if len(self.side_labels) != len(self.g):
            raise ValueError("need one side label per user")
        arrays = [self.H] + self.g
        for a in arrays:
            if not np.all(np.isfinite(a.view(float))):
                raise ValueError("channel entries must be finite")


def path_loss(distance_m, path_loss_exponent, ref_path_loss_db):
    """Linear power path loss at a given distance."""
    if distance_m <= 0.0:
        raise ValueError("zero-distance link")
    return 10.0 ** (-ref_path_loss_db / 10.0) * distance_m ** (-path_loss_exponent)


def generate_instance(seed, dims: SystemDims, geometry: Geometry,
                      path_loss_exponent=DEFAULT_PATH_LOSS_EXPONENT,
                      ref_path_loss_db=DEFAULT_REF_PATH_LOSS_DB):
    """Draw one seeded channel realization for the given geometry.

    Entries of each link are i.i.d. CN(0, 1) scaled by sqrt(PL(d)); see the
    module docstring for the generator and draw order. Identical arguments
    reproduce bit-identical output.
    """
    if len(geometry.user_positions) != dims.K:
        raise ValueError("geometry must place exactly K users")
    rng = np.random.Generator(np.random.Philox(int(seed)))

    d_bs_ris = float(np.linalg.norm(geometry.ris_position - geometry.bs_position))
    scale_h = np.sqrt(path_loss(d_bs_ris, path_loss_exponent, ref_path_loss_db))
    re = rng.standard_normal((dims.N, dims.M))
    im = rng.standard_normal((dims.N, dims.M))
    H = scale_h * (re + 1j * im) / np.sqrt(2.0)

    g = []
    for k in range(dims.K):
        d_k = float(np.linalg.norm(geometry.user_positions[k] - geometry.ris_position))
        scale_g = np.sqrt(path_loss(d_k, path_loss_exponent, ref_path_loss_db))
        re = rng.standard_normal(dims.N)
        im = rng.standard_normal(dims.N)
        g.append(scale_g * (re + 1j * im) / np.sqrt(2.0))

    return ChannelSet(H=H, g=g, side_labels=geometry.side_labels())


def fixed_instance(H, g, labels):
    """Wrap explicit channel matrices for reproducible tests."""
    if not isinstance(labels, UserSideLabels):
        labels = UserSideLabels(labels)
    return ChannelSet(H=H, g=g, side_labels=labels)


# Channel fixture CSV format, one record per line:
#   H,row,col,re,im        entry of the BS -> surface matrix
#   g,k,col,re,im          entry of user k's surface -> user vector
#   label,k,t|r            side label of user k
# Lines may appear in any order; dims are inferred from the indices.

def write_channel_csv(channels: ChannelSet, path):
    """Write a ChannelSet in the fixture CSV format (full float precision)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        n, m = channels.H.shape
        for i in range(n):
            for j in range(m):
                z = channels.H[i, j]
                w.writerow(["H", i, j, repr(z.real), repr(z.imag)])
        for k, gk in enumerate(channels.g):
            for j in range(n):
                w.writerow(["g", k, j, repr(gk[j].real), repr(gk[j].imag)])
        for k, side in enumerate(channels.side_labels):
            w.writerow(["label", k, side])


def read_channel_csv(path):
    """Read a ChannelSet back from the fixture CSV format."""
    h_entries, g_entries, labels = {}, {}, {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            kind = row[0]
            if kind == "H":
                h_entries[(int(row[1]), int(row[2]))] = float(row[3]) + 1j * float(row[4])
            elif kind == "g":
                g_entries[(int(row[1]), int(row[2]))] = float(row[3]) + 1j * float(row[4])
            elif kind == "label":
                labels[int(row[1])] = row[2]
            else:
                raise ValueError(f"unknown record kind {kind!r}")
    if not h_entries or not labels:
        raise ValueError("fixture file is missing H or label records")
    n = max(i for i, _ in h_entries) + 1
    m = max(j for _, j in h_entries) + 1
    H = np.zeros((n, m), dtype=complex)
    for (i, j), z in h_entries.items():
        H[i, j] = z
    num_users = max(labels) + 1
    g = [np.zeros(n, dtype=complex) for _ in range(num_users)]
    for (k, j), z in g_entries.items():
        g[k][j] = z
    sides = UserSideLabels([labels[k] for k in range(num_users)])
    return ChannelSet(H=H, g=g, side_labels=sides)
