"""Demo: the benchmark metrics on small, checkable examples.

BadPix(tau) is the percentage of pixels whose absolute error is strictly
greater than tau; MSE*100 is the mean squared error times 100; Q25 is the
25th-percentile absolute error times 100.

    python demos/04_metrics.py
"""

import numpy as np

from lfdepth.metrics import badpix, evaluate, format_table, mse100, q25, threshold_curve

gt = np.zeros((1, 4))
d = np.array([[0.0, 0.07, 0.08, 1.0]])
print("errors", d.ravel().tolist())
print(f"  BadPix(0.07) = {badpix(d, gt)}  (0.07 itself is not bad: the test is strict)")

print(f"MSE*100 of errors [0.1, 0.3] = {mse100(np.array([[0.1, 0.3]]), np.zeros((1, 2)))}")
e = np.array([[0.01, 0.02, 0.03, 0.04, 0.1, 0.2, 0.3, 0.4]])
print(f"Q25 of {e.ravel().tolist()} = {q25(e, np.zeros_like(e))}")
print("threshold curve of a uniform 0.05 error:",
      threshold_curve(np.full((2, 2), 0.05), np.zeros((2, 2)), taus=[0.03, 0.07]))

# Comparing two estimates side by side.
rng = np.random.default_rng(4)
truth = rng.uniform(-1, 1, (64, 64))
a = truth + rng.normal(0, 0.05, truth.shape)
b = truth + rng.normal(0, 0.02, truth.shape)
print()
print(format_table({"noisy": evaluate(a, truth), "less noisy": evaluate(b, truth)}))
