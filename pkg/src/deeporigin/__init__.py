"""deeporigin: known-vs-novel malware family triage.

Reports become Boolean unigram vectors, a deep multiclass classifier learns
the known families, its pre-softmax activations become compact file
signatures, and the Euclidean distance of a signature from the origin scores
how novel a sample is (small distance = likely unseen family).
"""

__version__ = "0.1.0"
