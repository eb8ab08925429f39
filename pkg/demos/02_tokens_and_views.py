"""Cutting a series into tokens, and the weak/strong views used for contrast."""

import numpy as np

from testembed.data import AugmentConfig, augment_strong, augment_weak, sample_pairs, segment
from testembed.synthetic import CLASS_NAMES, make_cls3

series = make_cls3(n_per_class=1, seed=0)
s = series[0]
print("class", CLASS_NAMES[s.label], "shape", s.values.shape)

tokens = segment(s, (16, 64), (8, 32), seed=1)
for t in tokens:
    print(f"token [{t.start:3d}, {t.end:3d})  length {t.length}")

aug = AugmentConfig(jitter_sigma=0.08, scale_sigma=0.1, max_segments=5, seed=0)
rng = np.random.default_rng(0)
weak = augment_weak(tokens[0], aug, rng)
strong = augment_strong(tokens[0], aug, rng)
print("weak view max change  %.3f" % np.abs(weak.values - tokens[0].values).max())
print("strong view max change %.3f" % np.abs(strong.values - tokens[0].values).max())

# positives overlap the anchor (or are its weak view); negatives share no index
anchor, pos, negs = sample_pairs(tokens, 0, seed=2)
print("positive", (pos.start, pos.end, pos.view), "negatives", [(n.start, n.end) for n in negs])
