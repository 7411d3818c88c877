import json
import math

import pytest

from disclip.backends import ToyWorld
from disclip.cli import SweepGrid, main
from disclip.core import ConfigError
from disclip.sceneio import read_jsonl, read_sweep_csv, write_jsonl
from helpers import ADVERSARIAL_WORLD_ATTRS, adversarial_specs, write_toy_scene_files


@pytest.fixture
def world():
    return ToyWorld(ADVERSARIAL_WORLD_ATTRS)


@pytest.fixture
def scenes_path(tmp_path, world):
    specs = [
        ([{"aqua"}, {"violet"}], 0),
        ([{"azure", "white"}, {"violet"}], 0),
        ([{"white"}, {"aqua", "violet"}], 1),
    ]
    gts = [["aqua"], ["azure white"], ["aqua violet"]]
    return write_toy_scene_files(tmp_path, world, specs, ground_truths=gts)


TOY_FLAGS = ["--blur-sigma", "4", "--resolution", "64"]


class TestSweepGrid:
    def test_valid(self):
        grid = SweepGrid((0.0, 1.0), (0.5,), 10)
        assert grid.sample_count == 10

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"delta_values": (), "lambda_values": (0.5,)},
            {"delta_values": (0.5,), "lambda_values": (1.5,)},
            {"delta_values": (-0.1,), "lambda_values": (0.5,)},
            {"delta_values": (0.5,), "lambda_values": (0.5,), "sample_count": 0},
        ],
    )
    def test_invalid(self, kwargs):
        kwargs.setdefault("sample_count", 1)
        with pytest.raises(ConfigError):
            SweepGrid(**kwargs)


class TestGenerateCommand:
    def test_three_scenes_in_order(self, scenes_path, tmp_path):
        out = tmp_path / "gen.jsonl"
        code = main(["generate", str(scenes_path), "--out", str(out), *TOY_FLAGS])
        assert code == 0
        records = read_jsonl(out)
        assert [r["scene_id"] for r in records] == [
            "scene-0000",
            "scene-0001",
            "scene-0002",
        ]
        assert all(r["stop_reason"] in ("stop_token", "max_tokens") for r in records)

    def test_guidance_off_is_greedy(self, scenes_path, tmp_path, world):
        out = tmp_path / "gen.jsonl"
        code = main(
            [
                "generate",
                str(scenes_path),
                "--out",
                str(out),
                "--beta",
                "0",
                "--alpha",
                "0",
                "--max-tokens",
                "3",
                *TOY_FLAGS,
            ]
        )
        assert code == 0
        # uniform toy LM, no guidance: greedy repeats the lowest token id
        lowest = world.vocabulary[0]
        for record in read_jsonl(out):
            assert record["expression"] == " ".join([lowest] * 3)

    def test_missing_image_error_record(self, scenes_path, tmp_path):
        records = read_jsonl(scenes_path)
        records[1]["image"] = "images/gone.png"
        broken = tmp_path / "broken.jsonl"
        write_jsonl(broken, records)
        out = tmp_path / "gen.jsonl"
        code = main(["generate", str(broken), "--out", str(out), *TOY_FLAGS])
        assert code == 1
        results = read_jsonl(out)
        assert "error" in results[1]
        assert results[1]["scene_id"] == "scene-0001"
        assert "expression" in results[0]

    def test_deterministic_output(self, scenes_path, tmp_path):
        out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert main(["generate", str(scenes_path), "--out", str(out1), *TOY_FLAGS]) == 0
        assert main(["generate", str(scenes_path), "--out", str(out2), *TOY_FLAGS]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_trace_flag(self, scenes_path, tmp_path):
        out = tmp_path / "gen.jsonl"
        code = main(
            [
                "generate", str(scenes_path), "--out", str(out),
                "--trace", "--max-tokens", "2", *TOY_FLAGS,
            ]
        )
        assert code == 0
        record = read_jsonl(out)[0]
        assert len(record["trace"]) == len(record["expression"].split()) or record[
            "stop_reason"
        ] == "stop_token"
        step = record["trace"][0]
        chosen = step["candidates"][step["chosen_index"]]
        assert chosen["fused"] == pytest.approx(
            chosen["l_lang"] + 2.0 * chosen["l_disclip"], abs=1e-12
        )

    def test_env_variable_equivalent(self, scenes_path, tmp_path, monkeypatch):
        out_flag = tmp_path / "flag.jsonl"
        out_env = tmp_path / "env.jsonl"
        assert main(
            ["generate", str(scenes_path), "--out", str(out_flag), "--beta", "0",
             "--alpha", "0", *TOY_FLAGS]
        ) == 0
        monkeypatch.setenv("DISCLIP_BETA", "0")
        monkeypatch.setenv("DISCLIP_ALPHA", "0")
        assert main(["generate", str(scenes_path), "--out", str(out_env), *TOY_FLAGS]) == 0
        a = [dict(r, scene_id=None) for r in read_jsonl(out_flag)]
        b = [dict(r, scene_id=None) for r in read_jsonl(out_env)]
        assert a == b

    def test_workers_preserve_order(self, scenes_path, tmp_path):
        out = tmp_path / "gen.jsonl"
        code = main(
            ["generate", str(scenes_path), "--out", str(out), "--workers", "3", *TOY_FLAGS]
        )
        assert code == 0
        assert [r["scene_id"] for r in read_jsonl(out)] == [
            "scene-0000",
            "scene-0001",
            "scene-0002",
        ]


class TestEvaluateCommand:
    def generate_then_evaluate(self, scenes_path, tmp_path, expressions=None):
        gen_out = tmp_path / "gen.jsonl"
        if expressions is None:
            assert main(["generate", str(scenes_path), "--out", str(gen_out), *TOY_FLAGS]) == 0
        else:
            write_jsonl(gen_out, expressions)
        eval_out = tmp_path / "eval.jsonl"
        code = main(
            [
                "evaluate",
                "--expressions",
                str(gen_out),
                "--scenes",
                str(scenes_path),
                "--out",
                str(eval_out),
                *TOY_FLAGS,
            ]
        )
        return code, read_jsonl(eval_out)

    def test_ground_truth_expressions_score_perfectly(self, scenes_path, tmp_path):
        scenes = read_jsonl(scenes_path)
        expressions = [
            {"scene_id": r["scene_id"], "expression": r["ground_truth"][0]} for r in scenes
        ]
        code, records = self.generate_then_evaluate(scenes_path, tmp_path, expressions)
        assert code == 0
        summary = records[-1]
        assert summary["summary"] is True
        assert summary["listener_accuracy"] == 1.0
        assert summary["bleu1"] == pytest.approx(1.0, abs=1e-12)
        assert summary["rouge_l"] == pytest.approx(1.0, abs=1e-12)
        assert summary["novel_fraction"] == 0.0

    def test_generated_expressions_evaluate(self, scenes_path, tmp_path):
        code, records = self.generate_then_evaluate(scenes_path, tmp_path)
        assert code == 0
        per_example = [r for r in records if "correct" in r]
        assert len(per_example) == 3
        for record in per_example:
            assert 0.0 <= record["iou"] <= 1.0

    def test_join_failure_reported(self, scenes_path, tmp_path):
        expressions = [{"scene_id": "nope", "expression": "aqua"}]
        code, records = self.generate_then_evaluate(scenes_path, tmp_path, expressions)
        assert code == 1
        assert records[0]["error"]["message"].startswith("scene_id not found")

    def test_empty_expressions_is_error(self, scenes_path, tmp_path):
        gen_out = tmp_path / "gen.jsonl"
        write_jsonl(gen_out, [])
        eval_out = tmp_path / "eval.jsonl"
        code = main(
            ["evaluate", "--expressions", str(gen_out), "--scenes", str(scenes_path),
             "--out", str(eval_out), *TOY_FLAGS]
        )
        assert code == 2


class TestSweepCommand:
    def test_grid_shape(self, scenes_path, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(
            [
                "sweep", str(scenes_path), "--out", str(out),
                "--deltas", "0.0,1.0", "--lambdas", "0.5,1.0",
                "--samples", "1", "--max-tokens", "2", *TOY_FLAGS,
            ]
        )
        assert code == 0
        rows = read_sweep_csv(out)
        assert len(rows) == 4
        assert {(r["delta"], r["lambda"]) for r in rows} == {
            (0.0, 0.5), (0.0, 1.0), (1.0, 0.5), (1.0, 1.0),
        }
        assert all(r["n"] == 1 for r in rows)

    def test_invalid_grid_rejected_before_work(self, scenes_path, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(
            ["sweep", str(scenes_path), "--out", str(out), "--lambdas", "1.5", *TOY_FLAGS]
        )
        assert code == 2
        assert not out.exists()

    def test_adversarial_lambda_ordering(self, tmp_path, world):
        scenes = write_toy_scene_files(tmp_path, world, adversarial_specs(6))
        out = tmp_path / "sweep.csv"
        code = main(
            [
                "sweep", str(scenes), "--out", str(out),
                "--deltas", "0.5", "--lambdas", "0.5,1.0",
                "--max-tokens", "2", *TOY_FLAGS,
            ]
        )
        assert code == 0
        rows = {r["lambda"]: r["accuracy"] for r in read_sweep_csv(out)}
        assert rows[1.0] < rows[0.5]
        assert rows[0.5] == 1.0

    def test_single_cell_equals_generate_plus_evaluate(self, scenes_path, tmp_path):
        sweep_out = tmp_path / "sweep.csv"
        code = main(
            [
                "sweep", str(scenes_path), "--out", str(sweep_out),
                "--deltas", "0.5", "--lambdas", "0.75", "--samples", "100", *TOY_FLAGS,
            ]
        )
        assert code == 0
        cell = read_sweep_csv(sweep_out)[0]

        gen_out = tmp_path / "gen.jsonl"
        eval_out = tmp_path / "eval.jsonl"
        assert main(["generate", str(scenes_path), "--out", str(gen_out), *TOY_FLAGS]) == 0
        assert main(
            ["evaluate", "--expressions", str(gen_out), "--scenes", str(scenes_path),
             "--out", str(eval_out), *TOY_FLAGS]
        ) == 0
        summary = read_jsonl(eval_out)[-1]
        assert cell["accuracy"] == summary["listener_accuracy"]
        assert cell["n"] == summary["n"]

    def test_unreachable_backend_marks_cells_failed(self, scenes_path, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(
            ["sweep", str(scenes_path), "--out", str(out), "--backend", "127.0.0.1:1",
             "--deltas", "0.0,1.0", "--lambdas", "0.5", *TOY_FLAGS]
        )
        assert code == 1
        rows = read_sweep_csv(out)
        assert len(rows) == 2
        for row in rows:
            assert math.isnan(row["accuracy"])
            assert row["n"] == 0

    def test_seeded_sampling_deterministic(self, scenes_path, tmp_path):
        outs = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            assert main(
                ["sweep", str(scenes_path), "--out", str(out), "--deltas", "0.5",
                 "--lambdas", "0.5", "--samples", "2", "--seed", "11", *TOY_FLAGS]
            ) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestConvertCommand:
    def test_refcoco_like(self, tmp_path):
        doc = {
            "images": [{"id": 1, "file_name": "x.png", "width": 64, "height": 64}],
            "annotations": [
                {"id": 1, "image_id": 1, "bbox": [0, 0, 8, 8]},
                {"id": 2, "image_id": 1, "bbox": [30, 30, 8, 8]},
            ],
            "refs": [
                {"ref_id": 5, "ann_id": 1, "image_id": 1, "sentences": [{"sent": "hi"}]},
                {"ref_id": 6, "ann_id": 2, "image_id": 1, "sentences": [{"sent": "lo"}],
                 "is_group": True},
            ],
        }
        src = tmp_path / "refs.json"
        src.write_text(json.dumps(doc))
        out = tmp_path / "scenes.jsonl"
        code = main(["convert", str(src), "--format", "refcoco_like", "--out", str(out)])
        assert code == 0
        records = read_jsonl(out)
        assert len(records) == 1
        assert records[0]["target_id"] == "ann1"
        assert len(records[0]["regions"]) == 2

    def test_schema_error_exit_code(self, tmp_path):
        src = tmp_path / "refs.json"
        src.write_text(json.dumps({"images": []}))
        out = tmp_path / "scenes.jsonl"
        code = main(["convert", str(src), "--format", "refcoco_like", "--out", str(out)])
        assert code == 2


class TestAblateCommand:
    def test_emits_one_row_per_mode(self, scenes_path, tmp_path):
        out = tmp_path / "ablation.csv"
        code = main(
            ["ablate", str(scenes_path), "--out", str(out), "--max-tokens", "2", *TOY_FLAGS]
        )
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "mode,accuracy,n"
        modes = [line.split(",")[0] for line in lines[1:]]
        assert modes == ["crop_blur", "blur", "mirror", "crop"]
        for line in lines[1:]:
            accuracy = float(line.split(",")[1])
            assert 0.0 <= accuracy <= 1.0
