import numpy as np
import pytest

from tvdiar.io import write_ppm

HEIGHT, WIDTH = 40, 48


def setup_image(rng, rows=5, cols=6, colors=3):
    """A camera setup: every block mixes a few random colours in random proportions."""
    img = np.empty((HEIGHT, WIDTH, 3), dtype=np.uint8)
    bh, bw = HEIGHT // rows, WIDTH // cols
    for r in range(rows):
        for c in range(cols):
            palette = rng.integers(0, 256, size=(colors, 3))
            choice = rng.integers(0, colors, size=(bh, bw))
            img[r * bh : (r + 1) * bh, c * bw : (c + 1) * bw] = palette[choice]
    return img


def shuffle_blocks(img, rng, rows=5, cols=6):
    """Same per-block histograms, different pixels."""
    out = img.copy()
    bh, bw = HEIGHT // rows, WIDTH // cols
    for r in range(rows):
        for c in range(cols):
            block = out[r * bh : (r + 1) * bh, c * bw : (c + 1) * bw].reshape(-1, 3)
            out[r * bh : (r + 1) * bh, c * bw : (c + 1) * bw] = rng.permutation(block).reshape(bh, bw, 3)
    return out


def render_episode(directory, setups, frames_per_shot=3, seed=0):
    """Write one PPM per frame; returns (planted cut frame indices, planted setup per shot)."""
    rng = np.random.default_rng(seed)
    images = {s: setup_image(rng) for s in sorted(set(setups))}
    cuts, frame = [], 0
    for k, s in enumerate(setups):
        if k:
            cuts.append(frame)
        for _ in range(frames_per_shot):
            write_ppm(directory / f"{frame:06d}.ppm", shuffle_blocks(images[s], rng))
            frame += 1
    return cuts, list(setups)


@pytest.fixture
def ppm_episode(tmp_path):
    setups = ["A", "B", "A", "B", "A", "C", "D", "C", "D", "E", "A"]
    cuts, planted = render_episode(tmp_path, setups)
    return tmp_path, cuts, planted


def canonical(labels):
    """Relabel by order of first appearance."""
    names = {}
    return [names.setdefault(l, len(names)) for l in labels]
