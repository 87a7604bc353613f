"""Periodic fields on the unit torus and their Fourier-space calculus.

Fields are sampled on an ``n x n`` grid with ``x_j = j / n``.  Axis ``-2`` of a
sample array is ``x1`` and axis ``-1`` is ``x2``.  Spectral coefficients use the
``rfft2`` half-plane layout, normalised so that ``hat[k] = \\int f e^{-2 pi i k.x}``
(i.e. the true Fourier coefficient, not the raw FFT sum).

Index conventions for 2-vectors ``v[i]`` and 2x2 tensors ``U[i, j]``:

* ``gradient(v)[i, j] = d_i v_j``
* ``divergence_tensor(U)[j] = sum_i d_i U[i, j]``
* ``curl_vector(v) = d_1 v_2 - d_2 v_1``
* ``curl_tensor(U) = (d_1 U_12 - d_2 U_11, d_1 U_22 - d_2 U_21)``

With these, ``divergence_tensor(gradient(v)) = laplacian(v)`` and
``curl_tensor(gradient(v)) = gradient(curl_vector(v))``.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi


class TorusGrid:
    """Uniform ``n x n`` grid on T^2 = R^2 / Z^2 with precomputed symbols."""

    def __init__(self, n: int):
        n = int(n)
        if n < 8 or n % 2:
            raise ValueError(f"grid size must be even and >= 8, got {n}")
        self.n = n
        self.m = n // 2 + 1
        k1 = np.fft.fftfreq(n, 1.0 / n)
        k2 = np.fft.rfftfreq(n, 1.0 / n)
        self.k1 = k1[:, None]
        self.k2 = k2[None, :]
        # first-derivative symbols drop the Nyquist mode so d/dx stays antisymmetric
        k1d = np.where(np.abs(k1) == n // 2, 0.0, k1)
        k2d = np.where(np.abs(k2) == n // 2, 0.0, k2)
        self.K1 = TWO_PI * k1d[:, None] * np.ones((1, self.m))
        self.K2 = TWO_PI * k2d[None, :] * np.ones((n, 1))
        self.K = np.stack([self.K1, self.K2])
        self.ksq = TWO_PI**2 * (self.k1**2 + self.k2**2)
        self.kabs = np.sqrt(self.k1**2 + self.k2**2)
        w = np.full(self.m, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        self.weight = np.broadcast_to(w[None, :], (n, self.m))
        cutoff = n / 3.0
        self.dealias_mask = (np.abs(self.k1) <= cutoff) & (np.abs(self.k2) <= cutoff)

    def __repr__(self):
        return f"TorusGrid(n={self.n})"

    def __eq__(self, other):
        return isinstance(other, TorusGrid) and other.n == self.n

    def __hash__(self):
        return hash(("TorusGrid", self.n))

    @cached_property
    def x(self) -> tuple[np.ndarray, np.ndarray]:
        s = np.arange(self.n) / self.n
        return np.meshgrid(s, s, indexing="ij")

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.n, self.m)

    # transforms -----------------------------------------------------------

    def fft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.rfft2(values) / self.n**2

    def ifft(self, hat: np.ndarray) -> np.ndarray:
        return np.fft.irfft2(hat * self.n**2, s=(self.n, self.n))

    def dealias(self, hat: np.ndarray) -> np.ndarray:
        return hat * self.dealias_mask

    # derivatives on spectral arrays ----------------------------------------

    def d(self, hat: np.ndarray, axis: int) -> np.ndarray:
        return 1j * self.K[axis] * hat

    def grad_hat(self, hat: np.ndarray) -> np.ndarray:
        """Gradient adding a leading derivative index: shape (2, *hat.shape)."""
        return 1j * self.K.reshape((2,) + (1,) * (hat.ndim - 2) + self.K.shape[1:]) * hat[None]

    def div_hat(self, hat: np.ndarray) -> np.ndarray:
        """Contract the leading index of ``hat`` with the derivative index."""
        return 1j * (self.K1 * hat[0] + self.K2 * hat[1])

    def lap_hat(self, hat: np.ndarray) -> np.ndarray:
        return -self.ksq * hat

    def curl_hat(self, hat: np.ndarray) -> np.ndarray:
        """Scalar curl of a vector (shape (2, n, m)) or vector curl of a tensor."""
        if hat.ndim == 3:
            return 1j * (self.K1 * hat[1] - self.K2 * hat[0])
        return np.stack([
            1j * (self.K1 * hat[0, 1] - self.K2 * hat[0, 0]),
            1j * (self.K1 * hat[1, 1] - self.K2 * hat[1, 0]),
        ])

    def inv_lap_hat(self, hat: np.ndarray) -> np.ndarray:
        """Zero-mean solution of lap(f) = g."""
        ksq = np.where(self.ksq == 0.0, 1.0, self.ksq)
        out = -hat / ksq
        out[..., 0, 0] = 0.0
        return out

    def project_hat(self, hat: np.ndarray) -> np.ndarray:
        """Leray projection of a vector field onto divergence-free fields."""
        ksq = np.where(self.ksq == 0.0, 1.0, self.ksq)
        kdotu = self.K1 * hat[0] + self.K2 * hat[1]
        return hat - self.K * (kdotu / ksq)

    def product_hat(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Dealiased spectral product of two fields given in physical space."""
        return self.dealias(self.fft(a * b))

    def outer_hat(self, u_hat: np.ndarray, w_hat: np.ndarray | None = None) -> np.ndarray:
        """Dealiased ``u (x) w`` as a (2, 2, n, m) spectral tensor."""
        u = self.ifft(u_hat)
        w = u if w_hat is None else self.ifft(w_hat)
        prod = u[:, None] * w[None, :]
        return self.dealias(self.fft(prod))

    # norms on spectral arrays ------------------------------------------------

    def l2sq_hat(self, hat: np.ndarray) -> float:
        return float(np.sum(self.weight * np.abs(hat) ** 2))

    def h1semi_sq_hat(self, hat: np.ndarray) -> float:
        return float(np.sum(self.weight * self.ksq * np.abs(hat) ** 2))

    def h2semi_sq_hat(self, hat: np.ndarray) -> float:
        return float(np.sum(self.weight * self.ksq**2 * np.abs(hat) ** 2))

    def upsample(self, hat: np.ndarray, factor: int = 2) -> np.ndarray:
        """Physical samples of the trigonometric interpolant on a finer grid."""
        n, big = self.n, self.n * factor
        half = n // 2
        out = np.zeros(hat.shape[:-2] + (big, big // 2 + 1), dtype=complex)
        out[..., :half, :half] = hat[..., :half, :half]
        out[..., big - half + 1:, :half] = hat[..., half + 1:, :half]
        # Nyquist rows/columns are shared between +n/2 and -n/2
        out[..., half, :half] += 0.5 * hat[..., half, :half]
        out[..., big - half, :half] += 0.5 * hat[..., half, :half]
        col = 0.5 * hat[..., :, half]
        out[..., :half, half] += col[..., :half]
        out[..., big - half + 1:, half] += col[..., half + 1:]
        out[..., half, half] += 0.5 * col[..., half]
        out[..., big - half, half] += 0.5 * col[..., half]
        return np.fft.irfft2(out * big**2, s=(big, big))


class Field:
    """A real field on a :class:`TorusGrid`; immutable after construction.

    ``values`` has shape ``(n, n)``, ``(2, n, n)`` or ``(2, 2, n, n)``.
    """

    rank: int | None = None

    def __init__(self, grid: TorusGrid, values=None, *, hat=None):
        if (values is None) == (hat is None):
            raise ValueError("give exactly one of values or hat")
        self.grid = grid
        if values is not None:
            values = np.array(values, dtype=float)
            values.setflags(write=False)
            self._values = values
            self._hat = None
            shape = values.shape
        else:
            hat = np.array(hat, dtype=complex)
            hat.setflags(write=False)
            self._hat = hat
            self._values = None
            shape = hat.shape[:-2] + (grid.n, grid.n)
        rank = len(shape) - 2
        if shape[-2:] != (grid.n, grid.n) or any(s != 2 for s in shape[:-2]) or rank > 2:
            raise ValueError(f"bad field shape {shape} for {grid}")
        if self.rank is not None and rank != self.rank:
            raise ValueError(f"{type(self).__name__} needs rank {self.rank}, got {rank}")
        self._rank = rank

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            v = self.grid.ifft(self._hat)
            v.setflags(write=False)
            self._values = v
        return self._values

    @property
    def hat(self) -> np.ndarray:
        if self._hat is None:
            h = self.grid.fft(self._values)
            h.setflags(write=False)
            self._hat = h
        return self._hat

    @property
    def kind(self) -> str:
        return ("scalar", "vector", "tensor")[self._rank]

    def __add__(self, other: Field) -> Field:
        return make_field(self.grid, hat=self.hat + other.hat)

    def __sub__(self, other: Field) -> Field:
        return make_field(self.grid, hat=self.hat - other.hat)

    def __mul__(self, c: float) -> Field:
        return make_field(self.grid, hat=self.hat * c)

    __rmul__ = __mul__

    def __repr__(self):
        return f"{type(self).__name__}(n={self.grid.n})"


class ScalarField(Field):
    rank = 0


class VectorField(Field):
    rank = 1


class TensorField(Field):
    rank = 2


_KINDS = {0: ScalarField, 1: VectorField, 2: TensorField}


def make_field(grid: TorusGrid, values=None, *, hat=None) -> Field:
    """Build the field subclass matching the array rank."""
    arr = values if values is not None else hat
    rank = np.ndim(arr) - 2
    return _KINDS[rank](grid, values, hat=hat)


def zeros(grid: TorusGrid, kind: str) -> Field:
    shape = {"scalar": (), "vector": (2,), "tensor": (2, 2)}[kind]
    return make_field(grid, np.zeros(shape + (grid.n, grid.n)))


# differential operators ------------------------------------------------------

def gradient(f: Field) -> Field:
    """Gradient; a scalar gives a vector, a vector ``v`` gives ``d_i v_j``."""
    if f.kind == "tensor":
        raise ValueError("gradient of a tensor field is not supported")
    return make_field(f.grid, hat=f.grid.grad_hat(f.hat))


def divergence(v: VectorField) -> ScalarField:
    if v.kind != "vector":
        raise ValueError("divergence expects a vector field")
    return ScalarField(v.grid, hat=v.grid.div_hat(v.hat))


def divergence_tensor(U: TensorField) -> VectorField:
    if U.kind != "tensor":
        raise ValueError("divergence_tensor expects a tensor field")
    return VectorField(U.grid, hat=U.grid.div_hat(U.hat))


def laplacian(f: Field) -> Field:
    return make_field(f.grid, hat=f.grid.lap_hat(f.hat))


def curl_vector(v: VectorField) -> ScalarField:
    if v.kind != "vector":
        raise ValueError("curl_vector expects a vector field")
    return ScalarField(v.grid, hat=v.grid.curl_hat(v.hat))


def curl_tensor(U: TensorField) -> VectorField:
    if U.kind != "tensor":
        raise ValueError("curl_tensor expects a tensor field")
    return VectorField(U.grid, hat=U.grid.curl_hat(U.hat))


def dealias(f: Field) -> Field:
    """2/3-rule truncation: drop modes with max(|k1|, |k2|) > n/3."""
    return make_field(f.grid, hat=f.grid.dealias(f.hat))


def dealiased_product(a: Field, b: Field) -> Field:
    """Pointwise product of two scalar fields, truncated by the 2/3 rule."""
    g = a.grid
    return make_field(g, hat=g.product_hat(g.ifft(g.dealias(a.hat)), g.ifft(g.dealias(b.hat))))


# norms -------------------------------------------------------------------------

NORMS = ("L2", "H1", "H2", "L4", "Linf")


def _pointwise_magnitude(f: Field, factor: int = 2) -> np.ndarray:
    fine = f.grid.upsample(f.hat, factor)
    if f.kind == "scalar":
        return np.abs(fine)
    axes = tuple(range(f._rank))
    return np.sqrt(np.sum(fine**2, axis=axes))


def norm(f: Field, which: str = "L2") -> float:
    """L2/H1/H2 by Parseval; L4 and Linf on a 2x oversampled grid.

    Vector and tensor fields use the Euclidean/Frobenius pointwise magnitude.
    ``H2`` is sqrt(L2^2 + |grad f|^2 + |hess f|^2) with the Hessian norm taken
    as the (2 pi |k|)^2 symbol.
    """
    g = f.grid
    if which == "L2":
        return np.sqrt(g.l2sq_hat(f.hat))
    if which == "H1":
        return np.sqrt(g.l2sq_hat(f.hat) + g.h1semi_sq_hat(f.hat))
    if which == "H2":
        return np.sqrt(g.l2sq_hat(f.hat) + g.h1semi_sq_hat(f.hat) + g.h2semi_sq_hat(f.hat))
    if which == "L4":
        mag = _pointwise_magnitude(f)
        return float(np.mean(mag**4) ** 0.25)
    if which == "Linf":
        return float(np.max(_pointwise_magnitude(f)))
    raise ValueError(f"unknown norm {which!r}; expected one of {NORMS}")


def grad_norm(f: Field) -> float:
    """||grad f||_L2."""
    return np.sqrt(f.grid.h1semi_sq_hat(f.hat))


def hess_norm(f: Field) -> float:
    """||grad^2 f||_L2 via the |2 pi k|^2 symbol."""
    return np.sqrt(f.grid.h2semi_sq_hat(f.hat))


def compound_norm(fields, which: str = "L2") -> float:
    """Norm of a tuple of fields: square root of the sum of squares."""
    return float(np.sqrt(sum(norm(f, which) ** 2 for f in fields)))
