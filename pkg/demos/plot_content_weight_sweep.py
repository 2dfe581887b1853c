"""
Sweeping the content weight
===========================

With the style weight fixed at 1, the content weight trades faithfulness to
the photo against strength of the style. Five values spanning four decades
are tried; each gets its own network.
"""

from pathlib import Path

from hrstyle.data import smoke_pair
from hrstyle.extractor import FeatureExtractor
from hrstyle.image_io import save_image
from hrstyle.losses import LossConfig
from hrstyle.trainer import TrainingConfig, run_transfer

out = Path("demo_out/sweep")
content, style = smoke_pair()
fx = FeatureExtractor.untrained(seed=0)
train = TrainingConfig(steps=40)  # kept short; use 200 for real outputs

for cw in (0.8, 8, 80, 800, 8000):
    run = run_transfer(content, style, loss_cfg=LossConfig(lambda_content=cw, lambda_style=1), train_cfg=train, fx=fx)
    last = run.loss_history[-1]
    print(f"cw {cw:>6g}  raw content {last.raw_content:.4f}  raw style {last.raw_style:.6f}")
    save_image(run.final_image, out / f"cw_{cw:g}.png")

# %%
# Raw style error climbs steadily as the content weight grows. Over only 40
# steps with untrained features the raw content term barely moves; with
# pretrained weights and the full 200 steps the trade-off shows in both.
