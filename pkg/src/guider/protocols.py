"""Protocol definitions and array aliases shared by GUIDER components."""

from typing import Protocol

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]


class Recommender(Protocol):
    """Inner-product recommender whose parameters are trained by hand-derived gradients."""

    @property
    def kind(self) -> str:
        """Model kind tag ("teacher" or "student")."""
        ...

    @property
    def n_users(self) -> int:
        """Number of users."""
        ...

    @property
    def n_items(self) -> int:
        """Number of items."""
        ...

    @property
    def params(self) -> dict[str, FloatArray]:
        """Trainable parameter blocks, updated in place by the optimizer."""
        ...

    def representations(self) -> tuple[FloatArray, FloatArray]:
        """Effective user and item matrices used for scoring."""
        ...

    def backward(self, grad_users: FloatArray, grad_items: FloatArray) -> dict[str, FloatArray]:
        """Map gradients on the effective matrices to parameter-block gradients."""
        ...

    def invalidate(self) -> None:
        """Drop cached representations after a parameter update."""
        ...
