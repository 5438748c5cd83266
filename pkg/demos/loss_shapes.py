"""Per-pixel loss values and gradient magnitudes as a function of the error d = p - g."""
import numpy as np

from gazelab.losses import loss_grad, loss_value, pixel_losses

d = np.array([0.0, 0.01, 0.1, 0.25, 0.5, 1.0])
g = np.full_like(d, 0.5)
p = g + d

print(f"{'d':>6} {'ead':>8} {'l1':>8} {'l2':>8}   grad: {'ead':>7} {'l1':>5} {'l2':>5}")
for i in range(len(d)):
    vals = [pixel_losses(k, p, g)[i] for k in ("ead", "l1", "l2")]
    grads = [loss_grad(k, p, g)[i] for k in ("ead", "l1", "l2")]
    print(f"{d[i]:6.2f} " + " ".join(f"{v:8.4f}" for v in vals) + "         " +
          " ".join(f"{v:5.3f}" for v in grads))

# a perfect guess costs nothing under ead, but bce at a soft target of 0.5 never reaches 0
print("ead, perfect prediction:", loss_value("ead", [0.5], [0.5]))
print("bce, logit 0 vs target 0.5:", loss_value("bce", [0.0], [0.5]), "= ln 2")

# small errors still get a gradient near 1 from ead, while l2 fades out
for x in (0.01, 0.1, 0.5):
    print(f"|d|={x}: ead grad {np.exp(x):.3f}, l2 grad {2 * x:.2f}")
