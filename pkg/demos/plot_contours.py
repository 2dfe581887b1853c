"""
Does the output keep the content's structure?
=============================================

Photorealism here means edges stay where they were. Both images are turned
to grayscale, Sobel edge maps are taken, and the two maps are compared by
normalized cross-correlation. A noise image gives the floor.
"""

from pathlib import Path

import torch

from hrstyle.data import smoke_pair
from hrstyle.evaluation import compare_contours
from hrstyle.extractor import FeatureExtractor
from hrstyle.image_io import ImageTensor, save_gray
from hrstyle.trainer import TrainingConfig, run_transfer

out = Path("demo_out/contours")
content, style = smoke_pair()
fx = FeatureExtractor.untrained(seed=0)

# %%
# A short run is enough to see the effect.
stylized = run_transfer(content, style, train_cfg=TrainingConfig(steps=60), fx=fx).final_image
noise = ImageTensor(torch.rand(3, *content.size, generator=torch.Generator().manual_seed(0)))

# %%
# Scores near 1 mean the edge layouts agree.
for name, img in (("stylized", stylized), ("noise", noise)):
    cmp = compare_contours(content, img)
    print(f"{name:9s} contour similarity {cmp.similarity:.3f}")
    save_gray(cmp.edges_b, out / f"{name}_contour.png", rescale=True)
save_gray(cmp.edges_a, out / "content_contour.png", rescale=True)
