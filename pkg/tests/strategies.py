"""Shared hypothesis strategies and independent test oracles."""

import numpy as np
from hypothesis import strategies as st

finite = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


def random_rotation(rng) -> np.ndarray:
    """Haar-uniform rotation from a normalized Gaussian quaternion (independent of the package)."""
    q = rng.standard_normal(4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


rotations = st.integers(0, 2**32 - 1).map(lambda s: random_rotation(np.random.default_rng(s)))
unit_vectors = (
    st.tuples(finite, finite, finite)
    .filter(lambda v: np.linalg.norm(v) > 1e-3)
    .map(lambda v: np.array(v) / np.linalg.norm(v))
)
