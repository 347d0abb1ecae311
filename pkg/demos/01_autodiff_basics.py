"""Tour of the tensor library: build a graph, differentiate, verify.

Run: python3 demos/01_autodiff_basics.py
"""

import numpy as np

from lipwave import gradcheck
from lipwave.tensor import Tensor, matmul, relu


def main():
    # y = relu(x @ w) summed to a scalar; gradients land in .grad buffers
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    w = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    y = relu(matmul(x, w))
    loss = y.mean()
    loss.backward()
    print(f"loss {loss.item():.4f}")
    print(f"x.grad shape {x.grad.shape}, w.grad shape {w.grad.shape}")

    # gradients accumulate across calls until zero_grad
    g1 = w.grad.copy()
    loss2 = relu(matmul(x, w)).mean()
    loss2.backward()
    print("second backward doubled w.grad:", np.allclose(w.grad, 2 * g1))
    w.zero_grad()

    # every op's backward rule is checked against central finite differences
    results = gradcheck.run_all(["matmul", "relu", "conv1d"])
    for name, err in results:
        print(f"gradcheck {name:<12s} max rel err {err:.2e}")


if __name__ == "__main__":
    main()
