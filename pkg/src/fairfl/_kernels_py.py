"""Pure numpy fallback for the compiled softmax-regression kernels."""
import numpy as np


def softmax_regression_grad(params, X, y, D, C):
    W = params[: D * C].reshape(D, C)
    logits = X @ W + params[D * C:]
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    probs[np.arange(len(y)), y] -= 1.0
    probs /= len(y)
    return np.concatenate([(X.T @ probs).ravel(), probs.sum(axis=0)])


def softmax_regression_sgd_epoch(params, X, y, order, lr, batch_size, D, C):
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        params -= lr * softmax_regression_grad(params, X[idx], y[idx], D, C)
