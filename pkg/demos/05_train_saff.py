"""Training with and without the style-aware terms.

Both runs start from the same source-pretrained network. The table shows
target accuracy and the distance between source and target class centres
after each epoch.
"""
from saff import pipeline
from saff.config import TrainConfig

cfg = TrainConfig(seed=1)
source, target = pipeline.make_data(cfg)
start = pipeline.pretrain_source(cfg, source)
print(f"source-only target accuracy {pipeline.evaluate(start, target):.3f}\n")

runs = {
    "source + IM": cfg.replace(use_ssid=False, use_ld=False, use_style=False),
    "full SAFF": cfg,
}
for name, run_cfg in runs.items():
    print(name)
    result = pipeline.train(run_cfg, source, target, params=start.copy())
    for r in result.reports:
        print(f"  epoch {r.epoch:2d}  acc_t {r.acc_t:.3f}  dist {r.dist:.4f}  total loss {r.losses.total:+.3f}")
