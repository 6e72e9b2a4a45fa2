"""Trains the bundled digits CNN and writes the MXW1 weight fixture.

Run once from the repository root:

    python python/train_fixture.py

Outputs crates/core/fixtures/digits_cnn.mxw, digits_test.csv and
digits_cnn.meta. Layout matches the Rust loader: activations are HWC,
convolution patches are ordered (ky, kx, channel) with channel fastest, and
every parametric layer stores a (fan_in + 1) x fan_out matrix whose last
row is the bias.
"""

import struct
from pathlib import Path

import numpy as np
import torch
from sklearn.datasets import load_digits
from sklearn.model_selection import train_test_split
from torch import nn

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures"

TAG_DENSE, TAG_CONV, TAG_RELU, TAG_POOL, TAG_ARGMAX = 1, 2, 3, 4, 5


class Net(nn.Module):
    def __init__(self):
        super().__init__()
        self.c1 = nn.Conv2d(1, 8, 3)
        self.c2 = nn.Conv2d(8, 16, 3)
        self.pool = nn.AvgPool2d(2)
        self.d1 = nn.Linear(64, 32)
        self.d2 = nn.Linear(32, 10)
        self.drop = nn.Dropout(0.2)

    def forward(self, x):
        x = torch.relu(self.c1(x))
        x = torch.relu(self.c2(x))
        x = self.pool(x)
        x = x.permute(0, 2, 3, 1).reshape(x.shape[0], -1)  # HWC flatten
        x = self.drop(torch.relu(self.d1(x)))
        return self.d2(x)


def conv_matrix(conv):
    w = conv.weight.detach().numpy()  # (c_out, c_in, kh, kw)
    c_out = w.shape[0]
    m = w.transpose(2, 3, 1, 0).reshape(-1, c_out)  # rows: (ky, kx, c)
    return np.vstack([m, conv.bias.detach().numpy()[None, :]])


def dense_matrix(lin):
    m = lin.weight.detach().numpy().T
    return np.vstack([m, lin.bias.detach().numpy()[None, :]])


def forward_numpy(mats, x):
    """Float reference of the Rust path, on HWC float32 images."""
    def conv(a, mat, k):
        h, w, c = a.shape
        oh, ow = h - k + 1, w - k + 1
        patches = np.stack(
            [a[y:y + k, x:x + k, :].reshape(-1) for y in range(oh) for x in range(ow)]
        )
        return (patches @ mat[:-1] + mat[-1]).reshape(oh, ow, -1)

    a = np.maximum(conv(x, mats[0], 3), 0)
    a = np.maximum(conv(a, mats[1], 3), 0)
    h, w, c = a.shape
    a = a.reshape(h // 2, 2, w // 2, 2, c).mean(axis=(1, 3)).reshape(-1)
    a = np.maximum(a @ mats[2][:-1] + mats[2][-1], 0)
    return a @ mats[3][:-1] + mats[3][-1]


def main():
    torch.manual_seed(7)
    digits = load_digits()
    x = (digits.images / 16.0).astype(np.float32)
    y = digits.target
    x_tr, x_te, y_tr, y_te = train_test_split(x, y, test_size=0.3, random_state=7, stratify=y)

    net = Net()
    opt = torch.optim.Adam(net.parameters(), lr=3e-3, weight_decay=1e-4)
    xt = torch.tensor(x_tr[:, None])
    yt = torch.tensor(y_tr)
    for epoch in range(60):
        net.train()
        perm = torch.randperm(len(xt))
        for i in range(0, len(xt), 64):
            idx = perm[i:i + 64]
            opt.zero_grad()
            loss = nn.functional.cross_entropy(net(xt[idx]), yt[idx])
            loss.backward()
            opt.step()
    net.eval()

    mats = [conv_matrix(net.c1), conv_matrix(net.c2), dense_matrix(net.d1), dense_matrix(net.d2)]
    mats = [m.astype(np.float32) for m in mats]
    preds = [int(np.argmax(forward_numpy(mats, img[:, :, None]))) for img in x_te]
    acc = 100.0 * np.mean(np.array(preds) == y_te)

    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "digits_cnn.mxw", "wb") as f:
        f.write(b"MXW1")
        f.write(struct.pack("<III", 8, 8, 1))
        layers = [
            (TAG_CONV, (3, 3, 1, 8, 1)),
            (TAG_RELU, ()),
            (TAG_CONV, (3, 3, 8, 16, 1)),
            (TAG_RELU, ()),
            (TAG_POOL, (2,)),
            (TAG_DENSE, (64, 32)),
            (TAG_RELU, ()),
            (TAG_DENSE, (32, 10)),
            (TAG_ARGMAX, ()),
        ]
        f.write(struct.pack("<I", len(layers)))
        for tag, params in layers:
            f.write(struct.pack("<B", tag))
            f.write(struct.pack("<%dI" % len(params), *params))
        for m in mats:
            f.write(m.astype("<f4").tobytes(order="C"))

    with open(OUT / "digits_test.csv", "w") as f:
        for img, label in zip(x_te, y_te):
            feats = ",".join(repr(float(v)) for v in img.reshape(-1))
            f.write(f"{feats},{label}\n")

    with open(OUT / "digits_cnn.meta", "w") as f:
        f.write(f"samples = {len(y_te)}\n")
        f.write(f"float_accuracy_percent = {acc:.4f}\n")
    print(f"test accuracy {acc:.2f}% on {len(y_te)} samples")


if __name__ == "__main__":
    main()
