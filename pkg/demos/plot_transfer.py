"""
Stylizing the bundled 64x64 pair
================================

A fresh generation network is optimized for one content/style pair. The
loss network is VGG19; with no weight file configured this script falls
back to a seeded untrained VGG19, which still drives the optimization but
does not produce meaningful artistic style.

Set ``HRSTYLE_VGG19_WEIGHTS`` to a torchvision ``vgg19`` state dict to use
real features.
"""

import os
from pathlib import Path

from hrstyle.data import smoke_pair
from hrstyle.extractor import WEIGHTS_ENV, FeatureExtractor
from hrstyle.image_io import save_image
from hrstyle.losses import LossConfig
from hrstyle.trainer import TrainingConfig, run_transfer, write_loss_history

out = Path("demo_out/transfer")
loss_cfg = LossConfig()  # lambda_c 80, lambda_s 1, lambda_tv 1e-6
if os.environ.get(WEIGHTS_ENV):
    fx = FeatureExtractor.from_file(depth=loss_cfg.deepest_layer())
else:
    fx = FeatureExtractor.untrained(seed=0, depth=loss_cfg.deepest_layer())
print("loss network:", fx.source)

# %%
# Both images are 64x64 and already divisible by four, so no resizing is
# needed. The style image would be used at its native size anyway.
content, style = smoke_pair()
run = run_transfer(content, style, loss_cfg=loss_cfg, train_cfg=TrainingConfig(steps=200), fx=fx)

# %%
# The history records every step. With the default weights the content
# term dominates the total, and the total falls by roughly an order of
# magnitude over the run.
totals = run.totals
print(f"first-20 mean {sum(totals[:20]) / 20:.4f}  last-20 mean {sum(totals[-20:]) / 20:.4f}")
for r in run.loss_history[::40]:
    print(f"step {r.step:3d}  total {r.total:.4f}  content {r.content:.4f}  style {r.style:.4f}")

save_image(content, out / "content.png")
save_image(run.final_image, out / "stylized.png")
write_loss_history(run.loss_history, out / "loss_history.csv")
print("wrote", out)
