"""Saliency metrics on hand-made maps."""
import numpy as np

from gazelab.metrics import auc_judd, cc, center_gaussian, nss, sim

# a 1x4 map, one fixation on the bright pixel
s = np.array([[3.0, 1.0, 1.0, 1.0]])
print("nss", nss(s, [(0, 0)]))  # sqrt(3)

# nss ignores positive rescaling and offsets
print("nss after 10*s + 4", nss(10 * s + 4, [(0, 0)]))

# auc: fixated pixels vs everything else, ties get half credit
s = np.array([[0.9, 0.2], [0.2, 0.1]])
print("auc", auc_judd(s, [(0, 0), (1, 0)]))
print("auc flat map", auc_judd(np.ones((4, 4)), [(1, 1)]))

# cc and sim compare two maps
a = center_gaussian(32, 32)
b = np.roll(a, 6, axis=1)
print("cc shifted gaussian", round(cc(a, b), 4))
print("sim shifted gaussian", round(sim(a, b), 4))
print("sim half/half vs all-left", sim([0.5, 0.5], [1.0, 0.0]))

# detector ratio against published model NSS, four models
ratio = [0.01, 0.027, 0.018, 0.041]
score = [1.68, 2.15, 1.92, 2.21]
print("ratio/nss correlation", round(cc(ratio, score), 3))
