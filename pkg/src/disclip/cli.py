"""Command-line entry point: generate | evaluate | sweep | convert | ablate.

Scenes are read from line-delimited JSON (see `disclip.sceneio`), results
are written as line-delimited JSON, and sweeps as CSV with the header
``delta,lambda,accuracy,n``. Every flag has an environment-variable
equivalent prefixed ``DISCLIP_`` (e.g. ``DISCLIP_BETA``). Exit codes:
0 full success, 1 per-scene failures occurred, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

from disclip.backends import (
    DEFAULT_FILLERS,
    ToyEncoder,
    ToyLM,
    ToyWorld,
)
from disclip.core import ConfigError, DisclipError, Hyperparameters
from disclip.decoding import DEFAULT_PROMPT, SceneEmbeddings, generate, precompute_scene_embeddings
from disclip.evaluation import (
    bleu_n,
    cider,
    clip_listener,
    diversity_stats,
    iou,
    metric_tokens,
    rouge_l,
)
from disclip.imaging import REP_MODES, ImagingConfig
from disclip.sceneio import (
    SceneFileError,
    convert_flickr_like,
    convert_refcoco_like,
    load_scenes,
    read_jsonl,
    scene_from_record,
    write_jsonl,
    write_sweep_csv,
)
from disclip.wire import RemoteBackend


@dataclass(frozen=True)
class SweepGrid:
    """Grid of blur-mix and distractor-weight values to evaluate."""

    delta_values: tuple[float, ...]
    lambda_values: tuple[float, ...]
    sample_count: int = 200

    def __post_init__(self):
        if not self.delta_values or not self.lambda_values:
            raise ConfigError("sweep grid value lists must be non-empty")
        for name, values in (("delta", self.delta_values), ("lambda", self.lambda_values)):
            for v in values:
                if not 0.0 <= v <= 1.0:
                    raise ConfigError(f"sweep {name} value {v} outside [0, 1]")
        if self.sample_count < 1:
            raise ConfigError(f"sample_count must be >= 1, got {self.sample_count}")


class BackendPool:
    """One backend per worker thread; in-process backends are shared."""

    def __init__(self, factory: Callable[[], tuple], shared: bool):
        self._factory = factory
        self._shared = shared
        self._local = threading.local()
        self._all: list = []
        self._lock = threading.Lock()
        self._shared_pair: Optional[tuple] = None

    def get(self) -> tuple:
        if self._shared:
            with self._lock:
                if self._shared_pair is None:
                    self._shared_pair = self._factory()
            return self._shared_pair
        pair = getattr(self._local, "pair", None)
        if pair is None:
            pair = self._factory()
            self._local.pair = pair
            with self._lock:
                self._all.append(pair)
        return pair

    def close(self):
        pairs = list(self._all)
        if self._shared_pair is not None:
            pairs.append(self._shared_pair)
        for lm, encoder in pairs:
            closer = getattr(lm, "close", None)
            if closer is not None:
                closer()


def toy_world_from_records(records: Sequence[dict], prompt: str = DEFAULT_PROMPT) -> ToyWorld:
    """Build the toy vocabulary implied by the scene files and prompt."""
    attributes: set[str] = set()
    for record in records:
        for region in record.get("regions", ()):
            attributes.update(region.get("attributes") or ())
    fillers = list(DEFAULT_FILLERS)
    for word in prompt.lower().split():
        if word not in fillers and word not in attributes and word != ".":
            fillers.append(word)
    return ToyWorld(sorted(attributes), filler_words=tuple(fillers))


def make_backend_pool(backend: str, records: Sequence[dict], prompt: str, workers: int) -> BackendPool:
    if backend == "toy":
        world = toy_world_from_records(records, prompt)

        def factory():
            return ToyLM(world), ToyEncoder(world)

        return BackendPool(factory, shared=True)

    def factory():
        remote = RemoteBackend(backend)
        return remote, remote

    return BackendPool(factory, shared=False)


def _error_record(scene_id: str, exc: Exception) -> dict:
    return {
        "scene_id": scene_id,
        "error": {"code": type(exc).__name__, "message": str(exc)},
    }


def _trace_payload(result) -> list[dict]:
    steps = []
    for step in result.trace:
        steps.append(
            {
                "chosen_index": step.chosen_index,
                "candidates": [
                    {
                        "token": c.token,
                        "p_model": c.p_model,
                        "s_plus": c.s_plus,
                        "s_minus_mean": c.s_minus_mean,
                        "l_disclip": c.l_disclip,
                        "degen_penalty": c.degen_penalty,
                        "l_lang": c.l_lang,
                        "fused": c.fused,
                    }
                    for c in step.candidates
                ],
            }
        )
    return steps


class SceneRunner:
    """Shared per-scene machinery: parse, embed once, generate, listen."""

    def __init__(
        self,
        base_dir: Path,
        pool: BackendPool,
        imaging_cfg: ImagingConfig,
        rep_mode: str,
        workers: int = 1,
    ):
        self.base_dir = base_dir
        self.pool = pool
        self.imaging_cfg = imaging_cfg
        self.rep_mode = rep_mode
        self.workers = max(1, workers)
        self._embeddings: dict[str, tuple] = {}
        self._lock = threading.Lock()

    def scene_embeddings(self, scene_id: str, record: dict) -> tuple:
        """(Scene, SceneEmbeddings), computed once per scene id."""
        with self._lock:
            cached = self._embeddings.get(scene_id)
        if cached is not None:
            return cached
        _, encoder = self.pool.get()
        _, scene = scene_from_record(record, base_dir=self.base_dir)
        embs = precompute_scene_embeddings(scene, encoder, self.imaging_cfg, self.rep_mode)
        with self._lock:
            self._embeddings[scene_id] = (scene, embs)
        return scene, embs

    def map_ordered(self, fn, items):
        """Apply fn across items with the worker pool, preserving order."""
        if self.workers == 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            return list(executor.map(fn, items))

    def generate_one(
        self,
        scene_id: str,
        record: dict,
        hyper: Hyperparameters,
        prompt: str,
        strip_prompt: bool,
        want_trace: bool,
    ) -> dict:
        try:
            _, embs = self.scene_embeddings(scene_id, record)
            lm, encoder = self.pool.get()
            result = generate(embs, lm, encoder, prompt, hyper, strip_prompt)
        except (DisclipError, OSError) as exc:
            return _error_record(scene_id, exc)
        out = {
            "scene_id": scene_id,
            "expression": result.expression,
            "stop_reason": result.stop_reason,
        }
        if want_trace:
            out["trace"] = _trace_payload(result)
        return out

    def listen_one(self, scene_id: str, record: dict, expression: str, delta: float, sim_mode: str) -> dict:
        try:
            scene, embs = self.scene_embeddings(scene_id, record)
            _, encoder = self.pool.get()
            prediction = clip_listener(expression, embs, encoder, delta, sim_mode)
            predicted_region = next(
                r for r in scene.regions if r.id == prediction.predicted_region_id
            )
            overlap = iou(predicted_region.bbox, scene.target.bbox)
        except (DisclipError, OSError) as exc:
            return _error_record(scene_id, exc)
        return {
            "scene_id": scene_id,
            "expression": expression,
            "predicted_region_id": prediction.predicted_region_id,
            "target_region_id": scene.target_id,
            "iou": overlap,
            "correct": overlap >= 0.5,
        }


def run_generation(
    scenes: Sequence[tuple[str, dict]],
    runner: SceneRunner,
    hyper: Hyperparameters,
    prompt: str,
    strip_prompt: bool = False,
    want_trace: bool = False,
) -> list[dict]:
    return runner.map_ordered(
        lambda item: runner.generate_one(item[0], item[1], hyper, prompt, strip_prompt, want_trace),
        scenes,
    )


def run_listener(
    pairs: Sequence[tuple[str, dict, str]],
    runner: SceneRunner,
    delta: float,
    sim_mode: str,
) -> list[dict]:
    return runner.map_ordered(
        lambda item: runner.listen_one(item[0], item[1], item[2], delta, sim_mode),
        pairs,
    )


def listener_accuracy(results: Sequence[dict]) -> tuple[float, int]:
    """(fraction correct, evaluated count) over listener records."""
    scored = [r for r in results if "correct" in r]
    if not scored:
        return float("nan"), 0
    return sum(1 for r in scored if r["correct"]) / len(scored), len(scored)


def summarize_language_metrics(examples: Sequence[dict]) -> dict:
    """Corpus-level summary over per-example records carrying references."""
    with_refs = [e for e in examples if e.get("references")]
    summary: dict = {}
    if with_refs:
        cands = [metric_tokens(e["expression"]) for e in with_refs]
        refs = [[metric_tokens(r) for r in e["references"]] for e in with_refs]
        usable = [(c, r) for c, r in zip(cands, refs) if c and all(r)]
        if usable:
            cand_list = [c for c, _ in usable]
            ref_list = [r for _, r in usable]
            summary["bleu1"] = sum(bleu_n(c, r, 1) for c, r in usable) / len(usable)
            summary["bleu4"] = sum(bleu_n(c, r, 4) for c, r in usable) / len(usable)
            summary["rouge_l"] = sum(
                max(rouge_l(c, ref) for ref in r) for c, r in usable
            ) / len(usable)
            summary["cider"] = cider(cand_list, ref_list)
    return summary


def run_representation_ablation(
    scenes: Sequence[tuple[str, dict]],
    make_runner: Callable[[str], SceneRunner],
    hyper: Hyperparameters,
    prompt: str,
    modes: Sequence[str] = REP_MODES,
) -> list[dict]:
    """Listener accuracy per region-representation variant.

    One row per mode, same shape as the representation ablation tables:
    [{"mode", "accuracy", "n"}, ...].
    """
    rows = []
    for mode in modes:
        runner = make_runner(mode)
        generated = run_generation(scenes, runner, hyper, prompt)
        pairs = [
            (scene_id, record, gen["expression"])
            for (scene_id, record), gen in zip(scenes, generated)
            if "expression" in gen
        ]
        results = run_listener(pairs, runner, hyper.delta, hyper.sim_mode)
        accuracy, n = listener_accuracy(results)
        rows.append({"mode": mode, "accuracy": accuracy, "n": n})
    return rows


# ---------------------------------------------------------------------------
# argparse wiring


def _env(name: str, fallback, cast=str):
    raw = os.environ.get(f"DISCLIP_{name}")
    if raw is None:
        return fallback
    if cast is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return cast(raw)


def _add_backend_flags(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--backend",
        default=_env("BACKEND", "toy"),
        help="'toy' or a protocol endpoint (host:port, tcp:host:port, unix:/path)",
    )
    parser.add_argument("--workers", type=int, default=_env("WORKERS", 1, int))
    parser.add_argument("--rep-mode", choices=REP_MODES, default=_env("REP_MODE", "crop_blur"))
    parser.add_argument("--blur-sigma", type=float, default=_env("BLUR_SIGMA", 10.0, float))
    parser.add_argument(
        "--resolution", type=int, default=_env("RESOLUTION", 224, int),
        help="square encoder input resolution",
    )


def _add_hyper_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--lambda", dest="lambda_", type=float, default=_env("LAMBDA", 0.75, float))
    parser.add_argument("--delta", type=float, default=_env("DELTA", 0.5, float))
    parser.add_argument("--beta", type=float, default=_env("BETA", 2.0, float))
    parser.add_argument("--alpha", type=float, default=_env("ALPHA", 0.6, float))
    parser.add_argument("--k", type=int, default=_env("K", 45, int))
    parser.add_argument("--max-tokens", type=int, default=_env("MAX_TOKENS", 16, int))
    parser.add_argument("--norm-mode", choices=("softmax", "raw"), default=_env("NORM_MODE", "softmax"))
    parser.add_argument("--sim-mode", choices=("cosine", "clipscore"), default=_env("SIM_MODE", "cosine"))
    parser.add_argument("--prompt", default=_env("PROMPT", DEFAULT_PROMPT))
    parser.add_argument(
        "--strip-prompt-for-clip", action="store_true",
        default=_env("STRIP_PROMPT_FOR_CLIP", False, bool),
    )


def _hyper_from_args(args, **overrides) -> Hyperparameters:
    values = dict(
        lambda_=args.lambda_,
        delta=args.delta,
        beta=args.beta,
        alpha=args.alpha,
        k=args.k,
        max_tokens=args.max_tokens,
        norm_mode=args.norm_mode,
        sim_mode=args.sim_mode,
    )
    values.update(overrides)
    return Hyperparameters(**values)


def _imaging_from_args(args) -> ImagingConfig:
    return ImagingConfig(encoder_resolution=args.resolution, blur_sigma=args.blur_sigma)


def _make_runner(args, scenes_path: Path, records, rep_mode: Optional[str] = None) -> SceneRunner:
    prompt = getattr(args, "prompt", DEFAULT_PROMPT)
    pool = make_backend_pool(args.backend, records, prompt, args.workers)
    return SceneRunner(
        base_dir=scenes_path.parent,
        pool=pool,
        imaging_cfg=_imaging_from_args(args),
        rep_mode=rep_mode or args.rep_mode,
        workers=args.workers,
    )


def cmd_generate(args) -> int:
    scenes_path = Path(args.scenes)
    scenes = load_scenes(scenes_path)
    records = [record for _, record in scenes]
    runner = _make_runner(args, scenes_path, records)
    try:
        hyper = _hyper_from_args(args)
        results = run_generation(
            scenes, runner, hyper, args.prompt, args.strip_prompt_for_clip, args.trace
        )
    finally:
        runner.pool.close()
    write_jsonl(args.out, results)
    failures = sum(1 for r in results if "error" in r)
    if failures:
        print(f"generate: {failures}/{len(results)} scenes failed", file=sys.stderr)
    return 1 if failures else 0


def cmd_evaluate(args) -> int:
    scenes_path = Path(args.scenes)
    scenes = dict(load_scenes(scenes_path))
    expr_records = read_jsonl(args.expressions)
    runner = _make_runner(args, scenes_path, list(scenes.values()))

    examples: list[dict] = []
    failures = 0
    try:
        usable: list[tuple[str, dict, str, Optional[list[str]]]] = []
        for record in expr_records:
            scene_id = str(record.get("scene_id", ""))
            if "expression" not in record:
                examples.append(
                    _error_record(scene_id, DisclipError("no expression for scene"))
                )
                failures += 1
                continue
            if scene_id not in scenes:
                examples.append(
                    _error_record(scene_id, DisclipError("scene_id not found in scenes file"))
                )
                failures += 1
                continue
            usable.append(
                (scene_id, scenes[scene_id], record["expression"], scenes[scene_id].get("ground_truth"))
            )
        if not usable and not examples:
            print("evaluate: no expression records found", file=sys.stderr)
            return 2

        listened = run_listener(
            [(sid, rec, expr) for sid, rec, expr, _ in usable], runner, args.delta, args.sim_mode
        )
        for (sid, _, expr, refs), result in zip(usable, listened):
            if "error" in result:
                failures += 1
                examples.append(result)
                continue
            if refs:
                result["references"] = list(refs)
                cand = metric_tokens(expr)
                ref_tokens = [metric_tokens(r) for r in refs]
                if cand and all(ref_tokens):
                    result["bleu1"] = bleu_n(cand, ref_tokens, 1)
                    result["bleu4"] = bleu_n(cand, ref_tokens, 4)
                    result["rouge_l"] = max(rouge_l(cand, ref) for ref in ref_tokens)
            examples.append(result)
    finally:
        runner.pool.close()

    scored = [e for e in examples if "correct" in e]
    accuracy, n = listener_accuracy(scored)
    expressions = [e["expression"] for e in scored]
    references = [r for e in scored for r in e.get("references", ())]
    stats = diversity_stats(expressions, reference=references if references else None)
    summary = {
        "summary": True,
        "n": n,
        "listener_accuracy": accuracy,
        "vocab_size": stats["vocab_size"],
        "novel_fraction": stats["novel_fraction"],
        "top_words": stats["top_words"],
    }
    summary.update(summarize_language_metrics(scored))
    write_jsonl(args.out, examples + [summary])
    return 1 if failures else 0


def cmd_sweep(args) -> int:
    try:
        grid = SweepGrid(
            delta_values=tuple(float(v) for v in args.deltas.split(",") if v != ""),
            lambda_values=tuple(float(v) for v in args.lambdas.split(",") if v != ""),
            sample_count=args.samples,
        )
    except (ConfigError, ValueError) as exc:
        print(f"sweep: {exc}", file=sys.stderr)
        return 2

    scenes_path = Path(args.scenes)
    scenes = load_scenes(scenes_path)
    rng = random.Random(args.seed)
    if grid.sample_count < len(scenes):
        picked = sorted(rng.sample(range(len(scenes)), grid.sample_count))
        scenes = [scenes[i] for i in picked]
    records = [record for _, record in scenes]
    runner = _make_runner(args, scenes_path, records)

    rows = []
    failed_cells = 0
    try:
        for delta in grid.delta_values:
            for lam in grid.lambda_values:
                try:
                    hyper = _hyper_from_args(args, delta=delta, lambda_=lam)
                    generated = run_generation(scenes, runner, hyper, args.prompt)
                    pairs = [
                        (sid, rec, gen["expression"])
                        for (sid, rec), gen in zip(scenes, generated)
                        if "expression" in gen
                    ]
                    results = run_listener(pairs, runner, delta, args.sim_mode)
                    accuracy, n = listener_accuracy(results)
                    if n == 0:
                        raise DisclipError("all scenes failed in this cell")
                    rows.append({"delta": delta, "lambda": lam, "accuracy": accuracy, "n": n})
                except (DisclipError, OSError) as exc:
                    failed_cells += 1
                    print(f"sweep: cell delta={delta} lambda={lam} failed: {exc}", file=sys.stderr)
                    rows.append({"delta": delta, "lambda": lam, "accuracy": float("nan"), "n": 0})
    finally:
        runner.pool.close()
    write_sweep_csv(args.out, rows)
    return 1 if failed_cells else 0


def cmd_convert(args) -> int:
    try:
        with open(args.input, encoding="utf-8") as handle:
            doc = json.load(handle)
        if args.format == "refcoco_like":
            records, skipped = convert_refcoco_like(doc)
        else:
            records, skipped = convert_flickr_like(doc)
    except (OSError, json.JSONDecodeError, SceneFileError) as exc:
        print(f"convert: {exc}", file=sys.stderr)
        return 2
    write_jsonl(args.out, records)
    print(
        json.dumps({"converted": len(records), "skipped_groups": skipped}),
        file=sys.stderr,
    )
    return 0


def cmd_ablate(args) -> int:
    scenes_path = Path(args.scenes)
    scenes = load_scenes(scenes_path)
    records = [record for _, record in scenes]
    runners: list[SceneRunner] = []

    def make_runner(mode: str) -> SceneRunner:
        runner = _make_runner(args, scenes_path, records, rep_mode=mode)
        runners.append(runner)
        return runner

    try:
        hyper = _hyper_from_args(args)
        rows = run_representation_ablation(scenes, make_runner, hyper, args.prompt)
    finally:
        for runner in runners:
            runner.pool.close()
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write("mode,accuracy,n\n")
        for row in rows:
            handle.write(f"{row['mode']},{row['accuracy']},{row['n']}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="disclip", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="generate expressions for scenes")
    p_gen.add_argument("scenes")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--trace", action="store_true", default=_env("TRACE", False, bool))
    _add_backend_flags(p_gen)
    _add_hyper_flags(p_gen)
    p_gen.set_defaults(func=cmd_generate)

    p_eval = sub.add_parser("evaluate", help="listener accuracy and language metrics")
    p_eval.add_argument("--expressions", required=True)
    p_eval.add_argument("--scenes", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--delta", type=float, default=_env("DELTA", 0.5, float))
    p_eval.add_argument("--sim-mode", choices=("cosine", "clipscore"), default=_env("SIM_MODE", "cosine"))
    _add_backend_flags(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="delta/lambda grid with listener accuracy")
    p_sweep.add_argument("scenes")
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--deltas", default=_env("DELTAS", "0.0,0.5,1.0"))
    p_sweep.add_argument("--lambdas", default=_env("LAMBDAS", "0.5,0.75,1.0"))
    p_sweep.add_argument("--samples", type=int, default=_env("SAMPLES", 200, int))
    p_sweep.add_argument("--seed", type=int, default=_env("SEED", 0, int))
    _add_backend_flags(p_sweep)
    _add_hyper_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_conv = sub.add_parser("convert", help="convert upstream annotations to scene files")
    p_conv.add_argument("input")
    p_conv.add_argument("--format", choices=("refcoco_like", "flickr_like"), required=True)
    p_conv.add_argument("--out", required=True)
    p_conv.set_defaults(func=cmd_convert)

    p_abl = sub.add_parser("ablate", help="listener accuracy per representation variant")
    p_abl.add_argument("scenes")
    p_abl.add_argument("--out", required=True)
    _add_backend_flags(p_abl)
    _add_hyper_flags(p_abl)
    p_abl.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2
    except (SceneFileError, OSError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
