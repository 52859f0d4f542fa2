"""fleetnav: multi-robot navigation training and energy-aware goal allocation.

Subpackages cover a deterministic 2D lidar world, a battery drain model,
a reward-categorized replay buffer, a small dense-network substrate with
hand-derived gradients, a TD3-style trainer, an exhaustive assignment
oracle, a graph-convolutional allocator, and an evaluation harness.
"""

__version__ = "0.1.0"
