"""Model builders: desk-scale presets plus the full CIFAR reference nets."""

import numpy as np

from .errors import ConfigError
from .graph import INPUT_ID, LayerNode, ModelGraph
from .layers import (Add, BatchNorm, Concat, Conv2d, Flatten, GlobalAvgPool,
                     Linear, MaxPool, Mul, ReLU, Sigmoid, init_weights)


class GraphBuilder:
    def __init__(self, input_shape, class_count, name, seed=0):
        self.input_shape = tuple(input_shape)
        self.class_count = class_count
        self.name = name
        self.rng = np.random.default_rng(seed)
        self.nodes = []
        self._last = INPUT_ID

    def add(self, kind, *inputs):
        """Append a node; defaults to consuming the previous node's output."""
        srcs = list(inputs) if inputs else [self._last]
        nid = len(self.nodes)
        self.nodes.append(LayerNode(nid, kind, srcs, init_weights(kind, self.rng)))
        self._last = nid
        return nid

    def conv_bn_relu(self, cin, cout, k=3, stride=1, pad=1, src=None):
        conv = self.add(Conv2d(cout, cin, k, stride, pad), *( [src] if src is not None else []))
        self.add(BatchNorm(cout))
        self.add(ReLU())
        return conv, self._last

    def build(self) -> ModelGraph:
        return ModelGraph(self.nodes, self.input_shape, self.class_count, self.name)


# ------------------------------------------------------------ desk presets


def vgg_mini(classes=10, seed=0) -> ModelGraph:
    """8 conv + 2 linear plain chain; every prunable layer its own group."""
    b = GraphBuilder((3, 32, 32), classes, "vgg-mini", seed)
    c = 3
    for width, pool in ((8, 0), (8, 1), (16, 0), (16, 1), (32, 0), (32, 1), (64, 0), (64, 1)):
        b.conv_bn_relu(c, width)
        c = width
        if pool:
            b.add(MaxPool(2, 2))
    b.add(Flatten())  # 64 x 2 x 2 -> 256
    b.add(Linear(64, 256))
    b.add(ReLU())
    b.add(Linear(classes, 64))
    return b.build()


def _basic_block(b, cin, cout, stride, src):
    b.conv_bn_relu(cin, cout, stride=stride, src=src)
    b.add(Conv2d(cout, cout, 3, 1, 1))
    b.add(BatchNorm(cout))
    main = b._last
    if stride != 1 or cin != cout:
        sc = b.add(Conv2d(cout, cin, 1, stride, 0), src)
        b.add(BatchNorm(cout))
        shortcut = b._last
    else:
        shortcut = src
    b.add(Add(), main, shortcut)
    b.add(ReLU())
    return b._last


def res_mini(classes=10, seed=0) -> ModelGraph:
    """3 residual stages, 2 basic blocks each; trunks form coupled groups."""
    b = GraphBuilder((3, 32, 32), classes, "res-mini", seed)
    _, cur = b.conv_bn_relu(3, 8)
    widths = (8, 16, 32)
    cin = 8
    for si, w in enumerate(widths):
        for bi in range(2):
            stride = 2 if (si > 0 and bi == 0) else 1
            cur = _basic_block(b, cin, w, stride, cur)
            cin = w
    b.add(GlobalAvgPool())
    b.add(Flatten())
    b.add(Linear(classes, widths[-1]))
    return b.build()


def incep_mini(classes=10, seed=0) -> ModelGraph:
    """2 concat blocks; branch layers stay separate groups with offset edges."""
    b = GraphBuilder((3, 32, 32), classes, "incep-mini", seed)
    _, cur = b.conv_bn_relu(3, 8)
    b.add(MaxPool(2, 2))
    stem = b._last
    br1, _ = b.conv_bn_relu(8, 4, k=1, pad=0, src=stem)
    r1 = b._last
    br2, _ = b.conv_bn_relu(8, 8, k=3, pad=1, src=stem)
    r2 = b._last
    cat1 = b.add(Concat(), r1, r2)  # 12 channels
    br3, _ = b.conv_bn_relu(12, 6, k=1, pad=0, src=cat1)
    r3 = b._last
    br4, _ = b.conv_bn_relu(12, 10, k=3, pad=1, src=cat1)
    r4 = b._last
    b.add(Concat(), r3, r4)  # 16 channels
    b.add(GlobalAvgPool())
    b.add(Flatten())
    b.add(Linear(classes, 16))
    return b.build()


def se_mini(classes=10, seed=0) -> ModelGraph:
    """1 squeeze-excitation block; the gate conv couples with the main conv."""
    b = GraphBuilder((3, 32, 32), classes, "se-mini", seed)
    _, main = b.conv_bn_relu(3, 8)
    b.add(GlobalAvgPool(), main)
    se1 = b.add(Conv2d(4, 8, 1, 1, 0))
    b.add(ReLU())
    se2 = b.add(Conv2d(8, 4, 1, 1, 0))
    gate = b.add(Sigmoid())
    b.add(Mul(), main, gate)
    b.conv_bn_relu(8, 16)
    b.add(GlobalAvgPool())
    b.add(Flatten())
    b.add(Linear(classes, 16))
    return b.build()


# ----------------------------------------------------- reference CIFAR nets

_VGG19_CFG = (64, 64, "M", 128, 128, "M", 256, 256, 256, 256, "M",
              512, 512, 512, 512, "M", 512, 512, 512, 512, "M")


def vgg19_cifar(classes=100, seed=0) -> ModelGraph:
    """VGG-19 with batchnorm, CIFAR classifier 512-4096-4096-classes."""
    b = GraphBuilder((3, 32, 32), classes, "vgg19-cifar", seed)
    c = 3
    for item in _VGG19_CFG:
        if item == "M":
            b.add(MaxPool(2, 2))
        else:
            b.conv_bn_relu(c, item)
            c = item
    b.add(Flatten())  # 512 x 1 x 1
    b.add(Linear(4096, 512))
    b.add(ReLU())
    b.add(Linear(4096, 4096))
    b.add(ReLU())
    b.add(Linear(classes, 4096))
    return b.build()


def resnet56_cifar(classes=100, seed=0) -> ModelGraph:
    """ResNet-56: 3 stages x 9 basic blocks, widths 16/32/64."""
    b = GraphBuilder((3, 32, 32), classes, "resnet56-cifar", seed)
    _, cur = b.conv_bn_relu(3, 16)
    cin = 16
    for si, w in enumerate((16, 32, 64)):
        for bi in range(9):
            stride = 2 if (si > 0 and bi == 0) else 1
            cur = _basic_block(b, cin, w, stride, cur)
            cin = w
    b.add(GlobalAvgPool())
    b.add(Flatten())
    b.add(Linear(classes, 64))
    return b.build()


FIXTURES = {
    "vgg-mini": vgg_mini,
    "res-mini": res_mini,
    "incep-mini": incep_mini,
    "se-mini": se_mini,
    "vgg19-cifar": vgg19_cifar,
    "resnet56-cifar": resnet56_cifar,
}


def make_fixture(name, classes=10, seed=0) -> ModelGraph:
    if name not in FIXTURES:
        raise ConfigError(f"unknown fixture {name!r}; have {sorted(FIXTURES)}")
    return FIXTURES[name](classes=classes, seed=seed)
