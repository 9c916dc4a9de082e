"""Float CNN definition and deterministic training loop.

Architecture (shapes for 1x8x8 inputs):

    conv1: 1 -> 8 channels, 3x3, padding 1      (8, 8, 8)
    relu, maxpool 2x2                            (8, 4, 4)
    conv2: 8 -> 16 channels, 3x3, padding 1     (16, 4, 4)
    relu, maxpool 2x2                            (16, 2, 2)
    flatten                                      (64,)
    fc: 64 -> 10 logits

Training is single-threaded and fully seeded so a given (seed, epochs)
pair always produces bit-identical weights.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .data import Split


class DigitsCnn(nn.Module):
    def __init__(self) -> None:
        super().__init__()
        self.conv1 = nn.Conv2d(1, 8, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(8, 16, kernel_size=3, padding=1)
        self.fc = nn.Linear(16 * 2 * 2, 10)
        self.pool = nn.MaxPool2d(2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.pool(torch.relu(self.conv1(x)))
        x = self.pool(torch.relu(self.conv2(x)))
        return self.fc(torch.flatten(x, 1))


def train_model(
    split: Split,
    seed: int,
    epochs: int,
    batch_size: int = 64,
    lr: float = 1e-3,
) -> tuple[DigitsCnn, float]:
    """Train on the split's training half; returns (model, float test accuracy)."""
    torch.set_num_threads(1)  # keep reductions single-threaded => reproducible
    torch.manual_seed(seed)
    model = DigitsCnn()
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    inputs = torch.from_numpy(split.train_x)
    targets = torch.from_numpy(split.train_y)
    shuffler = torch.Generator().manual_seed(seed)

    model.train()
    for _ in range(epochs):
        order = torch.randperm(inputs.shape[0], generator=shuffler)
        for start in range(0, inputs.shape[0], batch_size):
            batch = order[start : start + batch_size]
            optimizer.zero_grad()
            loss = loss_fn(model(inputs[batch]), targets[batch])
            loss.backward()
            optimizer.step()

    model.eval()
    with torch.no_grad():
        logits = model(torch.from_numpy(split.test_x))
    predictions = logits.argmax(dim=1).numpy()
    accuracy = float(np.mean(predictions == split.test_y.astype(np.int64)))
    return model, accuracy
