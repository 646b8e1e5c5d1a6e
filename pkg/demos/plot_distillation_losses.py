"""
Soft labels and the temperature-scaled KL term
==============================================

Softening a logit vector with a temperature flattens its distribution; the
distillation term multiplies the KL divergence by T**2 so that its gradient
keeps roughly the same scale as T changes.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from teskd.losses import kl_distill_loss, softened_probs

# a confident teacher and a student that is only slightly less sure
teacher = torch.tensor([[4.0, 1.0, 0.0, -1.0]], dtype=torch.double)
student = torch.tensor([[2.5, 1.5, 0.0, -0.5]], dtype=torch.double)

for T in (1.0, 3.0, 8.0):
    print(f"T={T:g}  teacher soft labels", np.round(softened_probs(teacher, T).numpy()[0], 3))

# the KL term stays of order one across temperatures thanks to the T**2 factor
temps = np.linspace(0.5, 10, 60)
kl = [float(kl_distill_loss(student, teacher, T)) for T in temps]
raw = [v / T**2 for v, T in zip(kl, temps)]

fig, ax = plt.subplots(figsize=(5, 3.5))
ax.plot(temps, kl, label="T^2 * KL (used)")
ax.plot(temps, raw, "--", label="KL alone")
ax.set_xlabel("temperature T")
ax.set_ylabel("loss")
ax.legend()
fig.tight_layout()
fig.savefig("distillation_losses.png", dpi=120)
print("wrote distillation_losses.png")
