#!/usr/bin/env python3
"""Cut the sample photographs bundled with scikit-image, scikit-learn, matplotlib and
PyWavelets into non-overlapping 128x128 grayscale P5 PGM crops.

Crops whose pixel standard deviation is below 4 (flat background) are skipped.
Output is deterministic: same packages, same files.
"""

import argparse
import pathlib
import sys

import numpy as np

CROP = 128
MIN_STD = 4.0


def bt601(rgb):
    r, g, b = (rgb[..., i].astype(np.int64) for i in range(3))
    return ((299 * r + 587 * g + 114 * b + 500) // 1000).astype(np.uint8)


def to_luma(img):
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 image, got {img.dtype}")
    if img.ndim == 3:
        return bt601(img[..., :3])
    return img


def sources():
    import skimage.data as sk

    for name in ["astronaut", "brick", "camera", "cell", "chelsea", "clock", "coffee", "coins",
                 "grass", "gravel", "hubble_deep_field", "immunohistochemistry", "moon",
                 "rocket", "retina"]:
        yield name, getattr(sk, name)()
    left, right, _ = sk.stereo_motorcycle()
    yield "motorcycle_left", left
    yield "motorcycle_right", right

    from sklearn.datasets import load_sample_image

    for name in ["china", "flower"]:
        yield name, load_sample_image(name + ".jpg")

    import matplotlib.cbook as cbook
    import matplotlib.image as mimage

    with cbook.get_sample_data("grace_hopper.jpg") as f:
        yield "grace_hopper", mimage.imread(f, format="jpg")

    import pywt.data

    yield "aero", pywt.data.aero()
    yield "ascent", pywt.data.ascent().astype(np.uint8)


def write_pgm(path, plane):
    h, w = plane.shape
    tmp = path.with_suffix(".tmp")
    tmp.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + plane.tobytes())
    tmp.replace(path)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=pathlib.Path, help="output directory")
    ap.add_argument("--min-images", type=int, default=100, help="fail if fewer crops are produced")
    args = ap.parse_args(argv)

    args.out.mkdir(parents=True, exist_ok=True)
    written = 0
    for name, img in sources():
        luma = to_luma(img)
        h, w = luma.shape
        for r in range(h // CROP):
            for c in range(w // CROP):
                crop = luma[r * CROP:(r + 1) * CROP, c * CROP:(c + 1) * CROP]
                if crop.std() < MIN_STD:
                    continue
                write_pgm(args.out / f"{name}_{r:02d}_{c:02d}.pgm", np.ascontiguousarray(crop))
                written += 1
    print(f"wrote {written} crops to {args.out}")
    if written < args.min_images:
        print(f"error: only {written} crops, need {args.min_images}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
