"""Named RNG stream tags.

Every random draw in the package goes through a generator seeded as
``np.random.default_rng([seed, tag, ...])`` with one of these tags, so runs
are reproducible and phases never share a stream.  No global RNG is touched.
"""

INIT = 101          # model parameter initialization
FL_TRAIN = 201      # federated training batch order, [seed, tag, round, client]
FL_POST = 202       # post-unlearning federated rounds (also fine-tuning)
FL_RETRAIN = 203    # retraining from scratch
UNLEARN = 301       # unlearning batch order
PARTITION = 401     # Dirichlet client partitioning
SPLIT = 402         # train/val/test split shuffling
DATA = 403          # synthetic data generation
