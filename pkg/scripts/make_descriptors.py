"""Regenerate the bundled CNN layer descriptors.

Each topology is written out by hand so that branch points (inception
modules, residual shortcuts, channel split/concat) appear as explicit rows.
Run from the repository root::

    python scripts/make_descriptors.py
"""

import csv
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src" / "photonic_dse" / "models"
HEADER = ["name", "kind", "in_c", "in_h", "in_w", "out_c",
          "kernel_h", "kernel_w", "stride", "padding", "groups"]


class Builder:
    def __init__(self, c, h, w):
        self.rows = []
        self.shape = (c, h, w)

    def _emit(self, name, kind, shape, out_c, k, s, p, g):
        c, h, w = shape
        self.rows.append([name, kind, c, h, w, out_c, k, k, s, p, g])

    def conv(self, name, out_c, k, s=1, p=0, g=1, src=None, relu=True):
        shape = src or self.shape
        self._emit(name, "conv", shape, out_c, k, s, p, g)
        h = (shape[1] + 2 * p - k) // s + 1
        w = (shape[2] + 2 * p - k) // s + 1
        self.shape = (out_c, h, w)
        if relu:
            self.act(name + "_relu")
        return self.shape

    def act(self, name, shape=None):
        shape = shape or self.shape
        self._emit(name, "activation", shape, shape[0], 1, 1, 0, 1)
        self.shape = shape
        return shape

    def pool(self, name, k, s, p=0, src=None):
        shape = src or self.shape
        self._emit(name, "pool", shape, shape[0], k, s, p, 1)
        h = (shape[1] + 2 * p - k) // s + 1
        w = (shape[2] + 2 * p - k) // s + 1
        self.shape = (shape[0], h, w)
        return self.shape

    def route(self, name, in_c, out_c, src=None):
        _, h, w = src or self.shape
        self._emit(name, "route", (in_c, h, w), out_c, 1, 1, 0, 1)
        self.shape = (out_c, h, w)
        return self.shape

    def fc(self, name, out_c):
        c, h, w = self.shape
        self._emit(name, "fc", (c * h * w, 1, 1), out_c, 1, 1, 0, 1)
        self.shape = (out_c, 1, 1)

    def write(self, fname):
        with open(OUT / fname, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(HEADER)
            wr.writerows(self.rows)


def googlenet():
    b = Builder(3, 224, 224)
    b.conv("conv1", 64, 7, 2, 3)
    b.pool("pool1", 3, 2, 1)
    b.conv("conv2_reduce", 64, 1)
    b.conv("conv2", 192, 3, 1, 1)
    b.pool("pool2", 3, 2, 1)
    cfg = {
        "3a": (64, 96, 128, 16, 32, 32), "3b": (128, 128, 192, 32, 96, 64),
        "4a": (192, 96, 208, 16, 48, 64), "4b": (160, 112, 224, 24, 64, 64),
        "4c": (128, 128, 256, 24, 64, 64), "4d": (112, 144, 288, 32, 64, 64),
        "4e": (256, 160, 320, 32, 128, 128), "5a": (256, 160, 320, 32, 128, 128),
        "5b": (384, 192, 384, 48, 128, 128),
    }
    for tag, (c1, c2r, c2, c3r, c3, c4) in cfg.items():
        if tag in ("4a", "5a"):
            b.pool("pool_before_" + tag, 3, 2, 1)
        x = b.shape
        p = "inception" + tag
        b.conv(p + "_1x1", c1, 1, src=x)
        b.conv(p + "_3x3_reduce", c2r, 1, src=x)
        b.conv(p + "_3x3", c2, 3, 1, 1)
        b.conv(p + "_5x5_reduce", c3r, 1, src=x)
        b.conv(p + "_5x5", c3, 5, 1, 2)
        b.pool(p + "_pool", 3, 1, 1, src=x)
        b.conv(p + "_pool_proj", c4, 1)
        total = c1 + c2 + c3 + c4
        b.route(p + "_concat", total, total)
    b.pool("avgpool", 7, 1)
    b.fc("fc", 1000)
    b.write("googlenet.csv")


def resnet50():
    b = Builder(3, 224, 224)
    b.conv("conv1", 64, 7, 2, 3)
    b.pool("maxpool", 3, 2, 1)
    for li, (width, blocks, stride) in enumerate(
            [(64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)], start=1):
        for bi in range(blocks):
            s = stride if bi == 0 else 1
            x = b.shape
            p = "layer%d_%d" % (li, bi)
            b.conv(p + "_conv1", width, 1, src=x)
            b.conv(p + "_conv2", width, 3, s, 1)
            out = b.conv(p + "_conv3", width * 4, 1, relu=False)
            if bi == 0:
                b.conv(p + "_downsample", width * 4, 1, s, relu=False, src=x)
            b.act(p + "_add_relu", out)
    b.pool("avgpool", 7, 1)
    b.fc("fc", 1000)
    b.write("resnet50.csv")


def mobilenet_v2():
    b = Builder(3, 224, 224)
    b.conv("conv_stem", 32, 3, 2, 1)
    cfg = [(1, 16, 1, 1), (6, 24, 2, 2), (6, 32, 3, 2), (6, 64, 4, 2),
           (6, 96, 3, 1), (6, 160, 3, 2), (6, 320, 1, 1)]
    idx = 0
    for t, c, n, s in cfg:
        for i in range(n):
            stride = s if i == 0 else 1
            inp = b.shape[0]
            hid = inp * t
            p = "block%d" % idx
            x = b.shape
            if t != 1:
                b.conv(p + "_expand", hid, 1)
            b.conv(p + "_dw", hid, 3, stride, 1, g=hid)
            out = b.conv(p + "_project", c, 1, relu=False)
            if stride == 1 and inp == c:
                b.act(p + "_add", out)
            idx += 1
    b.conv("conv_head", 1280, 1)
    b.pool("avgpool", 7, 1)
    b.fc("fc", 1000)
    b.write("mobilenet_v2.csv")


def shufflenet_v2():
    b = Builder(3, 224, 224)
    b.conv("conv1", 24, 3, 2, 1)
    b.pool("maxpool", 3, 2, 1)
    for si, (reps, oup) in enumerate([(4, 116), (8, 232), (4, 464)], start=2):
        bf = oup // 2
        for u in range(reps):
            p = "stage%d_%d" % (si, u)
            x = b.shape
            if u == 0:
                inp = x[0]
                b.conv(p + "_b1_dw", inp, 3, 2, 1, g=inp, relu=False)
                b.conv(p + "_b1_pw", bf, 1)
                b.conv(p + "_b2_pw1", bf, 1, src=x)
                b.conv(p + "_b2_dw", bf, 3, 2, 1, g=bf, relu=False)
                b.conv(p + "_b2_pw2", bf, 1)
            else:
                b.route(p + "_split", oup, bf)
                b.conv(p + "_b2_pw1", bf, 1)
                b.conv(p + "_b2_dw", bf, 3, 1, 1, g=bf, relu=False)
                b.conv(p + "_b2_pw2", bf, 1)
            b.route(p + "_concat_shuffle", bf, oup)
    b.conv("conv5", 1024, 1)
    b.pool("avgpool", 7, 1)
    b.fc("fc", 1000)
    b.write("shufflenet_v2.csv")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    googlenet()
    resnet50()
    mobilenet_v2()
    shufflenet_v2()
