"""Contract a random tensor network under a memory cap by slicing, and
check the result against the unsliced contraction."""
import numpy as np

from qforge.contraction import ContractionStats, contract, find_path, random_network
from qforge.numerics import RngStream

net = random_network(22, RngStream(4), edge_prob=0.3, num_open=2)
free = find_path(net)
print("unsliced: flops", free.costs["flops"], "largest intermediate", free.costs["largest_intermediate"])

for cap in (free.costs["largest_intermediate"] // 4, free.costs["largest_intermediate"] // 16):
    cap = max(cap, max(t.size for t in net.tensors))
    tree = find_path(net, target_size=cap)
    stats = ContractionStats()
    out = contract(net, tree, stats=stats)
    diff = np.max(np.abs(out - contract(net, free)))
    print(f"cap {cap:6d}: {tree.num_slices:4d} slices on {list(tree.sliced)}, "
          f"peak {stats.max_intermediate}, flops {tree.costs['flops']}, max diff {diff:.1e}")
