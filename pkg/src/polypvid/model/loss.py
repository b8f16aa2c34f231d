from __future__ import annotations

import numpy as np
import torch

from polypvid.errors import ShapeError


def l2_loss(targets, predictions):
    """Mean squared error over every pixel of every batch item.

    Accepts torch tensors (differentiable) or array-likes (returns a float).
    """
    if isinstance(targets, torch.Tensor) or isinstance(predictions, torch.Tensor):
        t = torch.as_tensor(targets)
        p = torch.as_tensor(predictions)
        if t.shape != p.shape:
            raise ShapeError(f"target shape {tuple(t.shape)} != prediction shape {tuple(p.shape)}")
        return torch.mean((p - t.to(p.dtype)) ** 2)
    t = np.asarray(targets, dtype=np.float64)
    p = np.asarray(predictions, dtype=np.float64)
    if t.shape != p.shape:
        raise ShapeError(f"target shape {t.shape} != prediction shape {p.shape}")
    return float(np.mean((p - t) ** 2))
