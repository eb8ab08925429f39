"""Text prototypes from the shipped vocabulary, and reading embeddings back as words."""

import numpy as np

from testembed.prototypes import fixed_word_prototypes, nearest_words, pca_prototypes, prototype_coords
from testembed.resources import load_builtin_vocab

vocab = load_builtin_vocab()
print("vocab", vocab.V, "words of width", vocab.M)

tp = pca_prototypes(vocab, 10)
print("PCA prototypes", tp.shape, "max Gram error %.1e" % np.abs(tp @ tp.T - np.eye(10)).max())

words = fixed_word_prototypes(vocab, ["value", "shape", "frequency"])
print("cosines among value/shape/frequency\n", np.round(words @ words.T, 3))

# any M-vector has coordinates on the prototypes and nearest words in the vocab
e = vocab.rows(["rise"])[0] + 0.3 * vocab.rows(["noise"])[0]
print("coords", np.round(prototype_coords(e, tp), 2))
print("nearest", nearest_words(e, vocab, 5))
