"""Train the 64x64 toy network on synthetic blobs and watch validation NSS.

Runs the five-epoch protocol twice: once with the x0.1 per-epoch decay and
once with a constant learning rate, to show how much the schedule matters
at this scale.  Takes roughly 20 seconds.
"""
import numpy as np

from gazelab.data import split_indices, synth_dataset
from gazelab.metrics import center_gaussian, nss
from gazelab.model import NetworkConfig, build_network
from gazelab.train import TrainConfig, train

data = synth_dataset(seed=0, count=200, h=64, w=64)
_, val = split_indices(len(data), 0)
center = np.mean([nss(center_gaussian(64, 64), data[i].fixations) for i in val])
print(f"{len(data)} samples, center-gaussian baseline NSS {center:.3f}")

for decay in (0.1, 1.0):
    net = build_network(NetworkConfig.toy(64, (8, 16), seed=0))
    cfg = TrainConfig(loss="ead", lr0=5e-4, lr_decay=decay, epochs=5, batch_size=8, seed=0)
    _, log = train(net, data, cfg)
    print(f"\nlr decay {decay}")
    for e in log:
        print(f"  epoch {e.epoch} lr {e.lr:.0e} loss {e.mean_loss:.4f} val nss {e.val_nss:.3f} auc {e.val_auc:.3f}")
