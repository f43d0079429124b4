from typing import TypeVar

import numpy as np
from numpy import typing as npt

FloatArray = npt.NDArray[np.float64]

T = TypeVar("T", float, FloatArray)

DEFAULT_ALPHA = 0.1
DEFAULT_QUANTILE = 0.9
DEFAULT_BASIS_ORDER = 4
DEFAULT_N_BENCH = 1_000_000

# paths drawn from one random substream
DEFAULT_CHUNK_SIZE = 4096

# weighted outputs held in memory per GNS row block, and the largest n*m grid
# kept between the two passes of the variance estimator
DEFAULT_BLOCK_ELEMENTS = 2**22
DEFAULT_CACHE_ELEMENTS = 2**24

# smallest benchmark sample accepted by the harness
MIN_N_BENCH = 10_000
