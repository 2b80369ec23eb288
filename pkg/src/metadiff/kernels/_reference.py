"""Pure-numpy reference implementations of the hot kernels.

This is the fallback backend and the semantic ground truth: the compiled
backend in ``_core.pyx`` implements the same functions with the same
operation order and is tested for agreement against this module. All inputs
and outputs are C-contiguous float64 arrays.
"""

import numpy as np

from ..errors import NonFiniteError

BACKEND = "python"


def dense_forward(weight, bias, x):
    """Affine map rows of x: (R, in) -> (R, out) via x @ weight.T + bias."""
    return x @ weight.T + bias


def dense_backward(weight, x, grad_out):
    """Reverse-mode gradients of dense_forward.

    Returns (grad_weight, grad_bias, grad_x).
    """
    grad_weight = grad_out.T @ x
    grad_bias = grad_out.sum(axis=0)
    grad_x = grad_out @ weight
    return grad_weight, grad_bias, grad_x


def rowscale(x, v):
    """Multiply every row of x element-wise by the vector v."""
    return x * v


def rowscale_backward(x, v, grad_out):
    """Gradients of rowscale w.r.t. x and v; v's gradient sums over rows."""
    return grad_out * v, (grad_out * x).sum(axis=0)


def softmax_xent(scores, labels):
    """Mean cross-entropy over rows of scores, with its score gradient.

    The gradient already carries the 1/R mean factor.
    """
    r = scores.shape[0]
    m = scores.max(axis=1)
    e = np.exp(scores - m[:, None])
    z = e.sum(axis=1)
    idx = np.arange(r)
    loss = float(np.mean(np.log(z) + m - scores[idx, labels]))
    dscores = e / z[:, None]
    dscores[idx, labels] -= 1.0
    dscores /= r
    return loss, dscores


def normalize_rows(x):
    """Scale each row to unit L2 norm; zero-norm rows stay zero."""
    norms = np.sqrt((x * x).sum(axis=1))
    safe = np.where(norms > 0.0, norms, 1.0)
    return x / safe[:, None]


def _ce_grad(x, xhat, labels, w, kind, temperature):
    """Cross-entropy weight gradient for one GDA iteration."""
    if kind == "cosine":
        norms = np.sqrt((w * w).sum(axis=1))
        if not norms.any():
            # Zero-initialized cosine weights: cosine scores are undefined at
            # the origin, so step out along the linear-kind gradient.
            scores = x @ w.T
            _, dscores = softmax_xent(scores, labels)
            return dscores.T @ x
        if not norms.all():
            raise ValueError("zero-norm cosine weight row")
        what = w / norms[:, None]
        cos = xhat @ what.T
        _, dscores = softmax_xent(temperature * cos, labels)
        a = dscores.T @ xhat
        c = (dscores * cos).sum(axis=0)
        return temperature * (a - c[:, None] * what) / norms[:, None]
    scores = x @ w.T
    _, dscores = softmax_xent(scores, labels)
    return dscores.T @ x


def gda_fit(x, labels, w0, kind, temperature, steps, lr, momentum):
    """Full-batch (momentum) gradient-descent fit of classifier weights.

    Iterates w <- w - lr * v with v <- momentum * v + grad, starting from
    v = 0. With momentum 0 this is bit-identical to the plain update.
    """
    w = np.array(w0, dtype=np.float64, copy=True)
    v = np.zeros_like(w)
    xhat = normalize_rows(x) if kind == "cosine" else x
    for _ in range(steps):
        g = _ce_grad(x, xhat, labels, w, kind, temperature)
        v = momentum * v + g
        w = w - lr * v
        if not np.isfinite(w).all():
            raise NonFiniteError(
                "gradient descent diverged to non-finite weights "
                "(learning rate too high?)"
            )
    return w
