"""Find positive fixation detectors in a briefly trained toy network and dissect them."""
from collections import Counter

from gazelab.data import synth_dataset
from gazelab.dissect import dissect_units, select_positive_detectors, unit_nss_scores
from gazelab.model import NetworkConfig, build_network
from gazelab.train import TrainConfig, train

data = synth_dataset(seed=1, count=120, h=64, w=64)
net = build_network(NetworkConfig.toy(64, (8, 16), seed=1))
train(net, data, TrainConfig(lr0=5e-4, lr_decay=1.0, epochs=3, seed=1))

scores = unit_nss_scores(net, data)
for s in sorted(scores, key=lambda s: -s.top5_mean)[:5]:
    print(f"unit {s.unit_index:2d} top-5 NSS {s.top5_mean:6.3f} normalized {s.normalized_score:.2f}")

detectors = select_positive_detectors(scores, 0.9)
print(f"{len(detectors)} of {len(scores)} units are positive detectors: {detectors}")

report = dissect_units(net, data, detectors)
for u in report.units:
    print(f"unit {u.unit}: T_k {u.threshold:.3f}, best class {u.best_class}, IOU {u.best_iou:.3f}")
for c in report.classes:
    print(f"{c.name:7s} f_d {c.detected:3d} f_t {c.total:3d} f_n {c.normalized:.3f}")

print("class occurrences:", Counter(k for s in data for k in s.masks))
