#!/usr/bin/env python3
# Copyright Contributors to the ZoomSplat Project
# SPDX-License-Identifier: Apache-2.0
#
"""Write the 16x16 ramp parity fixture for the reference upscaler.

Computed with plain numpy so the C++ and service test suites can both check
against numbers that were not produced by either implementation.
"""
import argparse
import json
import math
from pathlib import Path

import numpy as np

A = -0.5
SIGMA = 1.0
AMOUNT = 0.5


def cubic(x):
    x = abs(x)
    if x <= 1.0:
        return (A + 2.0) * x**3 - (A + 3.0) * x**2 + 1.0
    if x < 2.0:
        return A * x**3 - 5.0 * A * x**2 + 8.0 * A * x - 4.0 * A
    return 0.0


def reflect101(i, n):
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = abs(i) % period
    return i if i < n else period - i


def upsample_matrix(n, s):
    m = np.zeros((n * s, n))
    for j in range(n * s):
        x = (j + 0.5) / s - 0.5
        x0 = math.floor(x)
        for k in range(-1, 3):
            m[j, reflect101(x0 + k, n)] += cubic(x - (x0 + k))
    return m


def blur_matrix(n, sigma):
    r = math.ceil(3.0 * sigma)
    taps = np.array([math.exp(-0.5 * (i / sigma) ** 2) for i in range(-r, r + 1)])
    taps /= taps.sum()
    m = np.zeros((n, n))
    for j in range(n):
        for i in range(-r, r + 1):
            m[j, reflect101(j + i, n)] += taps[i + r]
    return m


def reference_sr(img, s):
    h, w, _ = img.shape
    uy, ux = upsample_matrix(h, s), upsample_matrix(w, s)
    up = np.einsum("yi,xj,ijc->yxc", uy, ux, img)
    by, bx = blur_matrix(h * s, SIGMA), blur_matrix(w * s, SIGMA)
    blurred = np.einsum("yi,xj,ijc->yxc", by, bx, up)
    return np.clip(up + AMOUNT * (up - blurred), 0.0, 1.0)


def ramp(n):
    y, x = np.mgrid[0:n, 0:n].astype(float)
    return np.stack([x / (n - 1), y / (n - 1), (x + y) / (2 * (n - 1))], axis=-1)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("output", type=Path)
    parser.add_argument("--size", type=int, default=16)
    parser.add_argument("--scale", type=int, default=4)
    args = parser.parse_args()
    lr = ramp(args.size)
    hr = reference_sr(lr, args.scale)
    doc = {
        "scale": args.scale,
        "lr": {"width": args.size, "height": args.size, "channels": 3, "data": lr.ravel().tolist()},
        "hr": {"width": hr.shape[1], "height": hr.shape[0], "channels": 3, "data": hr.ravel().tolist()},
    }
    args.output.write_text(json.dumps(doc) + "\n")


if __name__ == "__main__":
    main()
