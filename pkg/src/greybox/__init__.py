"""Grey-box adversarial attack and defence toolkit for binary sentiment classifiers."""

__version__ = "0.1.0"

from .autodiff import Adam, Rng, Tensor, backward, gumbel_softmax, no_grad

__all__ = ["Adam", "Rng", "Tensor", "backward", "gumbel_softmax", "no_grad", "__version__"]
