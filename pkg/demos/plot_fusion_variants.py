"""
Four ways to merge a lateral feature with the student pathway
=============================================================

Each student is built top-down: the deeper student feature is upsampled and
merged with the backbone feature of the current stage. The mixed block adds
the two and also concatenates the upsampled feature before a 1x1 reduction;
the ablations keep only the addition, only the concatenation, or drop the
lateral input altogether.
"""

import torch

from teskd.backbone import count_parameters
from teskd.fusion import FusionBlock, FusionVariant

lateral = torch.randn(2, 128, 16, 16)  # stage-2 backbone feature of a ResNet-18
top = torch.randn(2, 512, 8, 8)  # the student feature one stage deeper

for variant in FusionVariant:
    block = FusionBlock(128, 512, variant).eval()
    with torch.no_grad():
        out = block(lateral, top)
    print(f"{variant.value:14s} out {tuple(out.shape)}  params {count_parameters(block):,}")

# without a lateral connection the output ignores the backbone feature entirely
block = FusionBlock(128, 512, "no_connection").eval()
with torch.no_grad():
    same = torch.equal(block(lateral, top), block(torch.zeros_like(lateral), top))
print("no_connection ignores the lateral input:", same)
