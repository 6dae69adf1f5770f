"""Hot-loop kernels: compiled Cython core, numpy fallback.

The compiled module is used when it was built and ``TABVFM_PURE_PYTHON``
is unset; ``BACKEND`` names the active implementation.
"""

import os

import numpy as np

from . import _pykernels

_impl = _pykernels
BACKEND = "python"
if not os.environ.get("TABVFM_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass


def ks_sorted(a, b) -> float:
    """Two-sample KS statistic of already-sorted float arrays."""
    return float(_impl.ks_sorted(np.ascontiguousarray(a, dtype=np.float64),
                                 np.ascontiguousarray(b, dtype=np.float64)))


def w1_sorted(a, b) -> float:
    """1-Wasserstein distance of already-sorted float arrays."""
    return float(_impl.w1_sorted(np.ascontiguousarray(a, dtype=np.float64),
                                 np.ascontiguousarray(b, dtype=np.float64)))


def nearest_mixed_distance(q_num, q_cat, r_num, r_cat) -> np.ndarray:
    q_num = np.ascontiguousarray(q_num, dtype=np.float64)
    r_num = np.ascontiguousarray(r_num, dtype=np.float64)
    q_cat = np.ascontiguousarray(q_cat, dtype=np.int64)
    r_cat = np.ascontiguousarray(r_cat, dtype=np.int64)
    if q_num.shape[1] != r_num.shape[1] or q_cat.shape[1] != r_cat.shape[1]:
        raise ValueError("query and reference layouts differ")
    if r_num.shape[0] == 0:
        raise ValueError("empty reference set")
    if q_cat.size and r_cat.size and max(np.abs(q_cat).max(), np.abs(r_cat).max()) >= 2**31:
        # only equality matters, so relabel each column onto small codes
        joint = np.concatenate([q_cat, r_cat])
        for k in range(joint.shape[1]):
            joint[:, k] = np.unique(joint[:, k], return_inverse=True)[1]
        q_cat, r_cat = joint[:len(q_cat)].copy(), joint[len(q_cat):].copy()
    return _impl.nearest_mixed_distance(q_num, q_cat, r_num, r_cat)
