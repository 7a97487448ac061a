"""Comparison table and colour-loss ablation driver."""

import csv
import io

from neural_poisson.guidance import GuidanceMode
from neural_poisson.harness import CSV_HEADER, RunConfig, run_ablation, run_comparison
from neural_poisson.scenes import SceneBundle

from conftest import write_tiny_scene

TINY = RunConfig(seed=0, fit_steps=5, blend_steps=3)


def parse(text):
    return list(csv.reader(io.StringIO(text)))


class TestRunComparison:
    def test_schema(self, tiny_scene):
        res = run_comparison([SceneBundle.from_toml(tiny_scene)], cfg=TINY)
        rows = parse(res.csv())
        assert ",".join(rows[0]) == CSV_HEADER
        assert all(len(r) == 7 for r in rows)
        kinds = [(r[1], r[2]) for r in rows[1:]]
        assert kinds == [("max", "pie"), ("max", "neural"), ("affine:1,1", "pie"), ("affine:1,1", "neural"),
                         ("max", "pie/neural"), ("affine:1,1", "pie/neural")]
        for r in rows[1:5]:
            assert float(r[3]) >= 0 and float(r[4]) >= 0 and r[6] == "ok"

    def test_byte_identical_rerun(self, tiny_scene):
        b = SceneBundle.from_toml(tiny_scene)
        assert run_comparison([b], cfg=TINY).csv() == run_comparison([b], cfg=TINY).csv()

    def test_failure_isolated(self, tmp_path):
        good = SceneBundle.from_toml(write_tiny_scene(tmp_path / "good"))
        bad = SceneBundle.from_toml(write_tiny_scene(tmp_path / "bad", rect=(0, 0, 20, 20)))
        res = run_comparison([bad, good], modes=(GuidanceMode("max"),), cfg=TINY)
        rows = parse(res.csv())
        assert rows[1][0] == "bad" and rows[1][6].startswith("failed")
        assert "bad" in res.failures and "good" not in res.failures
        assert [r[0] for r in rows[2:]] == ["good"] * 3

    def test_identical_images_ratio_not_available(self, tmp_path):
        b = SceneBundle.from_toml(write_tiny_scene(tmp_path / "same", same=True))
        res = run_comparison([b], modes=(GuidanceMode("affine", 1, 0),), cfg=TINY)
        pie = res.get("same", "pie", GuidanceMode("affine", 1, 0))
        assert pie.grad < 1e-12 and pie.color == 0.0
        ratio = parse(res.csv())[-1]
        assert ratio[2] == "pie/neural" and ratio[3] == "n/a" and ratio[4] == "n/a"


class TestRunAblation:
    def test_identical_seeds_identical_reports(self, tiny_scene):
        b = SceneBundle.from_toml(tiny_scene)
        a, c = run_ablation(b, TINY), run_ablation(b, TINY)
        assert a.summary() == c.summary()
        assert a.global_image.tobytes() == c.global_image.tobytes()
        assert a.global_image.shape == (16, 16, 3)
        assert a.summary().startswith("scene=tiny global_background_mse=")
