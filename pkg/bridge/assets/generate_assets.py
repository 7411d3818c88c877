"""Regenerate the bundled test images (released to the public domain).

Two simple drawings with unambiguous captions, used by the smoke tests to
check that a real encoder ranks matching captions above mismatching ones:

    red_circle.png  - a red circle on a white background
    blue_square.png - a blue square on a white background
"""

from pathlib import Path

import numpy as np
from PIL import Image

SIZE = 224


def red_circle() -> np.ndarray:
    arr = np.full((SIZE, SIZE, 3), 255, dtype=np.uint8)
    yy, xx = np.mgrid[0:SIZE, 0:SIZE]
    mask = (yy - SIZE / 2) ** 2 + (xx - SIZE / 2) ** 2 <= (SIZE * 0.35) ** 2
    arr[mask] = (220, 30, 30)
    return arr


def blue_square() -> np.ndarray:
    arr = np.full((SIZE, SIZE, 3), 255, dtype=np.uint8)
    lo, hi = int(SIZE * 0.18), int(SIZE * 0.82)
    arr[lo:hi, lo:hi] = (30, 60, 220)
    return arr


def main():
    here = Path(__file__).parent
    Image.fromarray(red_circle()).save(here / "red_circle.png")
    Image.fromarray(blue_square()).save(here / "blue_square.png")
    print(f"wrote {here / 'red_circle.png'} and {here / 'blue_square.png'}")


if __name__ == "__main__":
    main()
