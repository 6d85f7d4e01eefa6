# Building an item co-click graph from a raw click log.
#
# We generate a small synthetic log, split it into sessions and count which
# items get clicked next to each other. The planted clusters should show up
# as dense blocks, joined by a handful of heavy "gateway" edges.

import numpy as np

from ginctr.clicklog import parse_click_log, segment_sessions, sort_events
from ginctr.cograph import build_graph, neighbors_topn
from ginctr.syndata import SynConfig, generate

cfg = SynConfig(num_items=120, num_clusters=6, num_users=800, seed=1)
data = generate(cfg)
print(f"{len(data.click_lines)} clicks from {cfg.num_users} users")
print("first lines of the log:")
for line in data.click_lines[:4]:
    print("   ", line.replace("\t", " | "))


# Sessions: a new one starts when the query changes topic or the user goes
# quiet for more than half an hour.

events = sort_events(parse_click_log(data.click_lines))
sessions = segment_sessions(events)
lengths = np.array([len(s) for s in sessions])
print(f"\n{len(sessions)} sessions, mean length {lengths.mean():.2f}, longest {lengths.max()}")


# The graph: one edge per pair of items clicked next to each other.

g = build_graph(sessions, window=1)
print(f"graph: {g.num_nodes} nodes, {g.num_edges} edges")

same = np.array([data.item_cluster[u] == data.item_cluster[v] for u, v, _ in g.edges()])
w = np.array([w for _, _, w in g.edges()], dtype=float)
print(f"weight inside clusters {w[same].sum():.0f}, across clusters {w[~same].sum():.0f}")


# The most popular item of cluster 0 is its gateway. Its strongest neighbors
# are its cluster mates plus the gateway of cluster 1.

gateway = min(i for i, c in data.item_cluster.items() if c == 0)
print(f"\ntop neighbors of {gateway} (cluster 0):")
for v, wt in neighbors_topn(g, gateway, 8):
    print(f"    {v}  weight {wt:4d}  cluster {data.item_cluster[v]}")
