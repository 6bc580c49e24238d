"""Purpose tags for seed-derived random streams.

Every random stream in the package is built as
``SeedSequence([user_seed, PURPOSE, ...extra])``.  Distinct purposes get
distinct tags so that reusing one user seed across stages never makes two
stages consume the same underlying bit stream.
"""

EPOCH_SHUFFLE = 0
FORGET_DRAW = 1
DP_NOISE = 2
GLOROT_INIT = 3
SISA_DEAL = 4
SISA_SHARD_INIT = 5
SISA_SLICE = 6
MIA_SUBSAMPLE = 7
