import numpy as np
import pytest

from neural_poisson.io import write_png


def write_tiny_scene(root, same=False, rect=(5, 5, 11, 11), offset=(1, 0)):
    """16 x 16 scene bundle on disk; ``same`` makes target equal to source."""
    yy, xx = np.mgrid[0:16, 0:16] / 15.0
    s = np.stack([xx, yy, 0.5 * np.ones_like(xx)], axis=-1)
    t = s if same else np.stack([0.5 + 0.3 * np.sin(6 * xx), yy[::-1], xx * yy], axis=-1)
    root.mkdir(parents=True, exist_ok=True)
    write_png(root / "s.png", s)
    write_png(root / "t.png", t)
    off = (0, 0) if same else offset
    (root / "scene.toml").write_text(
        f'name = "{root.name}"\nsource = "s.png"\ntarget = "t.png"\noffset = [{off[0]}, {off[1]}]\n'
        f'lambda = 1.0\nmode = "affine:1,0"\n[mask]\nrect = [{", ".join(map(str, rect))}]\n'
    )
    return root / "scene.toml"


@pytest.fixture
def tiny_scene(tmp_path):
    return write_tiny_scene(tmp_path / "tiny")


# shared fitted scenes for the end-to-end checks --------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def run_cfg():
    from neural_poisson.harness import RunConfig

    return RunConfig(seed=0)


@pytest.fixture(scope="session")
def prepared_scenes(run_cfg):
    """Fitted networks per bundled scene, with the time each fit took."""
    import time

    from neural_poisson.harness import prepare_scene
    from neural_poisson.scenes import bundled_scene

    cache = {}

    def get(name):
        if name not in cache:
            t0 = time.perf_counter()
            scene = prepare_scene(bundled_scene(name), run_cfg)
            cache[name] = (scene, time.perf_counter() - t0)
        return cache[name]

    return get


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
