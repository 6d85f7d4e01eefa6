# Following one user's clicks through the graph.
#
# Diffusion expands the clicked items K hops along their top-N neighbors.
# The GID layers then fold those neighborhoods back into one vector per
# click, and attention against the ad turns the clicks into a single
# intention vector.

import numpy as np

from ginctr.clicklog import parse_click_log, segment_sessions, sort_events
from ginctr.cograph import build_graph, diffuse
from ginctr.ctrmodel import TrainConfig, build_vocabs, init_params
from ginctr.gid import gid_forward
from ginctr.syndata import SynConfig, bridged, generate

cfg = SynConfig(num_items=120, num_clusters=6, num_users=800, seed=2)
data = generate(cfg)
g = build_graph(segment_sessions(sort_events(parse_click_log(data.click_lines))), 1)

# pick a held-out user: someone who never crossed into the bridged cluster
sample = next(s for s in data.test if s.user_id in data.heldout and len(s.pre_clicks) >= 4)
home = data.user_home[sample.user_id]
clicks = list(sample.pre_clicks[-4:])
print(f"user {sample.user_id}, home cluster {home}, clicks {clicks}")


# How far does each hop reach, and does it reach the bridged cluster?

for K in range(4):
    layers = diffuse(g, clicks, K, n=10)
    reach = layers.frontier(0)
    hit = sorted({data.item_cluster[v] for v in reach})
    print(f"K={K}: {len(reach):3d} items reachable, clusters {hit}")
print(f"bridged cluster for this user: {bridged(home, cfg.num_clusters)}")

# The graph is undirected, so the gateway edge into the home cluster (from
# the cluster before it) is as visible as the edge out to the bridged one.
# Diffusion alone cannot tell the liked side of the ring from the other.


# Intention vectors with freshly initialized parameters. Only the shapes and
# the attention pattern matter here; training comes in the next demo.

tc = TrainConfig(depth=2, neighbors=10, dim=8)
params = init_params(tc, *build_vocabs(data.train, g))
gid = params.gid()
out = gid_forward(sample.ad_item, clicks, 2, g, 10, params.tensors["item_table"], params.items.rows, gid)
np.set_printoptions(precision=3, suppress=True)
print("\nattention over the clicks:", out.attention.value)
print("intention vector:", out.uii.value)

empty = gid_forward(sample.ad_item, [], 2, g, 10, params.tensors["item_table"], params.items.rows, gid)
print("with no clicks the vector is zero:", empty.uii.value)
