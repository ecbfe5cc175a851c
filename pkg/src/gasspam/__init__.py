"""Graph-based comment spam detection: a small numpy autodiff engine, a TextCNN
encoder, heterogeneous graph convolution over the user-item graph, and a
similarity graph over comments built with NN-Descent."""

import os as _os

# GAS_THREADS caps BLAS/OpenMP parallelism; it must be set before numpy loads.
_threads = _os.environ.get("GAS_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
