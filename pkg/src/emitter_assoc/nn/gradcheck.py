"""Central finite-difference gradient verification."""

import numpy as np

from .functional import softmax_cross_entropy


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))


def grad_check(model, x, label, epsilon=1e-5, max_per_tensor=None, seed=0):
    """
    Compare backprop gradients of the cross-entropy loss with central differences.

    The check runs on a float64 copy of ``model``; the original is untouched.

    Parameters
    ----------
    model
        Anything with ``forward``, ``backward``, ``params``, ``grads`` and
        ``astype(dtype)`` returning a copy.
    x : np.ndarray
        A single example (no batch axis).
    label : int
    epsilon : float
        Finite-difference step.
    max_per_tensor : int, optional
        Check at most this many randomly chosen coordinates per parameter
        tensor; all coordinates by default.

    Returns
    -------
    float
        Maximum relative error over all checked coordinates.
    """
    m = model.astype(np.float64)
    xb = np.asarray(x, dtype=np.float64)[None]
    y = np.array([label])

    def loss():
        return softmax_cross_entropy(m.forward(xb), y)[0]

    _, g = softmax_cross_entropy(m.forward(xb), y)
    m.backward(g)
    analytic = [gr.copy() for gr in m.grads]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, ga in zip(m.params, analytic):
        flat = p.reshape(-1)
        coords = np.arange(flat.size)
        if max_per_tensor is not None and flat.size > max_per_tensor:
            coords = rng.choice(flat.size, size=max_per_tensor, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss()
            flat[i] = orig - epsilon
            down = loss()
            flat[i] = orig
            num = (up - down) / (2 * epsilon)
            worst = max(worst, float(relative_error(ga.reshape(-1)[i], num)))
    return worst
