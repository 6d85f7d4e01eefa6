# Training GIN at several depths against the pooled baseline.
#
# A scaled-down version of the depth comparison in the acceptance suite, so
# it finishes in about a minute. At this scale the gap between depths is
# about as large as the seed-to-seed noise, so any single run can rank
# them either way; the acceptance suite averages five seeds.

import time

from ginctr.clicklog import parse_click_log, segment_sessions, sort_events
from ginctr.cograph import build_graph
from ginctr.ctrmodel import GinModel, TrainConfig, train
from ginctr.evaluation import bucket_report
from ginctr.syndata import SynConfig, generate

data = generate(SynConfig(num_items=600, num_clusters=12, num_users=1500, seed=0))
g = build_graph(segment_sessions(sort_events(parse_click_log(data.click_lines))), 1)
print(f"{len(data.train)} training samples, {len(data.test)} test samples, graph {g.num_nodes} nodes")

settings = dict(dim=16, epochs=4, lr=3e-3, batch=256, seed=0)
models = {
    "K=0": TrainConfig(depth=0, **settings),
    "K=1": TrainConfig(depth=1, **settings),
    "K=2": TrainConfig(depth=2, **settings),
    "sumpool": TrainConfig(aggregator="sumpool-base", **settings),
}

scores = {}
for name, cfg in models.items():
    t = time.perf_counter()
    res = train(data.train, g, cfg)
    scores[name] = GinModel(res.params, g, cfg).predict(data.test)
    print(f"{name:8s} final train loss {res.history[-1]:.4f}  ({time.perf_counter() - t:.1f}s)")


# Overall AUC and AUC by how many clicks the user had. Bucket 0 holds users
# with no clicks at all, where every GIN variant sees the same zero vector.

print()
print(bucket_report(data.test, scores).to_text())
