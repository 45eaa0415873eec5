"""Train the desk-scale fixture CNNs and write them (float + quantized) plus test data.

    python scripts/make_fixture.py --out tests/data
    python scripts/make_fixture.py --out tests/data --which toy

"fixture" is a four-conv net with one residual add; "toy" is a plain three-conv net
small enough to enumerate every genome over two tiles.

Needs torch. The outputs are committed, so tests never train anything.
"""

import argparse
from pathlib import Path

import numpy as np
import torch
from torch import nn

from axdse.qnet import FloatNetwork, Node, quantize_network, save_network, synthetic_cifar, write_cifar10
from axdse.qnet.engine import evaluate_accuracy, exact_assignment
from axdse.mult import make_exact
from axdse.qnet.quantize import float_forward


class Net(nn.Module):
    def __init__(self):
        super().__init__()
        self.c1 = nn.Conv2d(3, 8, 3, 1, 1)
        self.c2 = nn.Conv2d(8, 16, 3, 2, 1)
        self.c3 = nn.Conv2d(16, 16, 3, 2, 1)
        self.c4 = nn.Conv2d(16, 16, 3, 1, 1)
        self.fc = nn.Linear(16, 10)

    def forward(self, x):
        x = torch.relu(self.c1(x))
        x = torch.relu(self.c2(x))
        x = torch.relu(self.c3(x))
        x = torch.relu(self.c4(x) + x)
        return self.fc(x.mean(dim=(2, 3)))


class ToyNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.c1 = nn.Conv2d(3, 8, 3, 2, 1)
        self.c2 = nn.Conv2d(8, 16, 3, 2, 1)
        self.c3 = nn.Conv2d(16, 16, 3, 2, 1)
        self.fc = nn.Linear(16, 10)

    def forward(self, x):
        x = torch.relu(self.c1(x))
        x = torch.relu(self.c2(x))
        x = torch.relu(self.c3(x))
        return self.fc(x.mean(dim=(2, 3)))


def _p(t):
    return t.detach().numpy().astype(np.float32)


def _conv(nid, src, layer, relu):
    return Node(nid, "conv", (src,), stride=layer.stride[0], padding=layer.padding[0], relu=relu,
                weights=_p(layer.weight), bias=_p(layer.bias))


def to_float_network(model) -> FloatNetwork:
    p, conv = _p, _conv
    if isinstance(model, ToyNet):
        nodes = [
            conv("conv1", "input", model.c1, True),
            conv("conv2", "conv1", model.c2, True),
            conv("conv3", "conv2", model.c3, True),
            Node("gap", "avgpool", ("conv3",)),
            Node("fc", "dense", ("gap",), weights=p(model.fc.weight), bias=p(model.fc.bias)),
            Node("head", "argmax", ("fc",)),
        ]
        return FloatNetwork((3, 32, 32), nodes, 1.0 / 255.0)
    nodes = [
        conv("conv1", "input", model.c1, True),
        conv("conv2", "conv1", model.c2, True),
        conv("conv3", "conv2", model.c3, True),
        conv("conv4", "conv3", model.c4, False),
        Node("add4", "add", ("conv4", "conv3")),
        Node("relu4", "relu", ("add4",)),
        Node("gap", "avgpool", ("relu4",)),
        Node("fc", "dense", ("gap",), weights=p(model.fc.weight), bias=p(model.fc.bias)),
        Node("head", "argmax", ("fc",)),
    ]
    return FloatNetwork((3, 32, 32), nodes, 1.0 / 255.0)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="tests/data")
    ap.add_argument("--train", type=int, default=4000)
    ap.add_argument("--test", type=int, default=300)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--which", choices=["fixture", "toy"], default="fixture")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(0)
    train = synthetic_cifar(args.train, seed=0)
    test = synthetic_cifar(args.test, seed=1)
    x = torch.tensor(train.images, dtype=torch.float32) / 255.0
    y = torch.tensor(train.labels, dtype=torch.long)
    model = Net() if args.which == "fixture" else ToyNet()
    opt = torch.optim.Adam(model.parameters(), lr=2e-3)
    for epoch in range(args.epochs):
        perm = torch.randperm(len(x))
        for i in range(0, len(x), 64):
            idx = perm[i:i + 64]
            opt.zero_grad()
            loss = nn.functional.cross_entropy(model(x[idx]), y[idx])
            loss.backward()
            opt.step()
        print(f"epoch {epoch}: loss {loss.item():.3f}")

    fnet = to_float_network(model)
    float_acc = np.mean(float_forward(fnet, test.images / 255.0)["head"] == test.labels)
    qnet = quantize_network(fnet, train.images[:500])
    q_acc = evaluate_accuracy(qnet, test, exact_assignment(qnet, make_exact(8)))
    print(f"float accuracy {float_acc:.3f}, quantized accuracy {q_acc:.3f}")

    if args.which == "toy":
        save_network(qnet, out / "toy_net")
        return
    save_network(fnet, out / "fixture_float")
    save_network(qnet, out / "fixture_net")
    write_cifar10(test, out / "synthetic_test.bin")


if __name__ == "__main__":
    main()
