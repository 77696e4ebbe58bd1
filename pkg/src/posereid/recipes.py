"""Scripted desk-scale experiments with directional expectations.

Each recipe generates its dataset, sweeps one knob through the ablation
driver, renders the table/figure report, and checks directional properties
(never exact numbers). Reports land under <out_dir>/recipes/<name>/.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .config import OcclusionConfig, RunConfig, save_config
from .data import build_dataset, save_manifest
from .pipeline import MODULE_TOGGLE_ROWS, AblationReport, ablate
from .reporting import format_table


def recipe_base_config(seed: int = 0) -> RunConfig:
    """Small config with heavily occluded, body-colored-distractor queries."""
    cfg = RunConfig(seed=seed)
    cfg.data.seed = seed
    cfg.data.num_identities = 8
    cfg.data.samples_per_identity = 16
    cfg.data.occlusion = OcclusionConfig(
        probability=0.6, max_boxes=2, min_area=0.10, max_area=0.30, distractor=True
    )
    cfg.data.query_occlusion = OcclusionConfig(
        probability=1.0, max_boxes=2, min_area=0.30, max_area=0.45, distractor=True
    )
    cfg.data.gallery_occlusion = OcclusionConfig(
        probability=0.25, max_boxes=1, min_area=0.10, max_area=0.25, distractor=True
    )
    cfg.train.epochs = 50
    cfg.train.augment.enabled = False
    return cfg


def _summary_map(report: AblationReport) -> dict:
    return {row["value"]: row["map"] for row in report.summary_rows}


def _prop_full_beats_plain(report: AblationReport) -> tuple[bool, str]:
    maps = _summary_map(report)
    return (
        maps["full"] >= maps["none"],
        f"mAP full={maps['full']:.4f} vs none={maps['none']:.4f}",
    )


def _prop_multi_view_helps(report: AblationReport) -> tuple[bool, str]:
    maps = _summary_map(report)
    single = maps.get(1)
    best_multi = max(v for k, v in maps.items() if k != 1)
    return best_multi >= single, f"best multi-view mAP={best_multi:.4f} vs single={single:.4f}"


def _prop_decoder_helps(report: AblationReport) -> tuple[bool, str]:
    maps = _summary_map(report)
    removed = maps.get(0)
    best = max(v for k, v in maps.items() if k != 0)
    return best >= removed, f"best decoded mAP={best:.4f} vs removed={removed:.4f}"


def _prop_moderate_threshold(report: AblationReport) -> tuple[bool, str]:
    maps = _summary_map(report)
    return (
        maps[0.2] >= maps[0.7] - 0.05,
        f"mAP at 0.2={maps[0.2]:.4f} vs 0.7={maps[0.7]:.4f}",
    )


def _prop_noise_degrades(report: AblationReport) -> tuple[bool, str]:
    maps = _summary_map(report)
    return (
        maps[0.1] >= maps[20.0],
        f"mAP at sigma 0.1={maps[0.1]:.4f} vs sigma 20={maps[20.0]:.4f}",
    )


@dataclass
class ExperimentRecipe:
    name: str
    description: str
    param: str
    values: list
    properties: list[tuple[str, Callable[[AblationReport], tuple[bool, str]]]] = field(
        default_factory=list
    )

    @property
    def property_names(self) -> list[str]:
        return [name for name, _ in self.properties]


RECIPES: dict[str, ExperimentRecipe] = {
    r.name: r
    for r in [
        ExperimentRecipe(
            name="module-toggles",
            description="Toggle pose gating, view matching, and the push loss "
            "through the six-row combination table.",
            param="modules",
            values=[name for name, _ in MODULE_TOGGLE_ROWS],
            properties=[("full model outranks the plain encoder-decoder", _prop_full_beats_plain)],
        ),
        ExperimentRecipe(
            name="view-count",
            description="Sweep the number of learnable decoder views.",
            param="num_views",
            values=[1, 5, 10, 15, 17, 20],
            properties=[("some multi-view setting matches or beats one view", _prop_multi_view_helps)],
        ),
        ExperimentRecipe(
            name="decoder-depth",
            description="Sweep decoder layer count including a removed decoder.",
            param="decoder_layers",
            values=[0, 1, 2, 3],
            properties=[("a decoded model matches or beats the removed decoder", _prop_decoder_helps)],
        ),
        ExperimentRecipe(
            name="confidence-threshold",
            description="Sweep the confidence threshold that splits views into "
            "high/low-confidence sets.",
            param="conf_threshold",
            values=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            properties=[("the default threshold holds up against the harshest one", _prop_moderate_threshold)],
        ),
        ExperimentRecipe(
            name="pose-noise",
            description="Evaluate one trained model under increasing heatmap noise.",
            param="pose_noise_sigma",
            values=[0.1, 1.0, 10.0, 20.0],
            properties=[("mild noise scores at least as well as extreme noise", _prop_noise_degrades)],
        ),
    ]
}


@dataclass
class RecipeResult:
    name: str
    report: AblationReport
    properties: list[dict]
    out_dir: Path

    @property
    def all_passed(self) -> bool:
        return all(p["passed"] for p in self.properties)


def run_recipe(
    name: str,
    out_dir: str | Path,
    seed: int = 0,
    parallel: bool = False,
    config: RunConfig | None = None,
) -> RecipeResult:
    """Run one named recipe end to end and write its report directory."""
    if name not in RECIPES:
        raise ValueError(f"unknown recipe {name!r}; available: {sorted(RECIPES)}")
    recipe = RECIPES[name]
    report_dir = Path(out_dir) / "recipes" / name
    report_dir.mkdir(parents=True, exist_ok=True)

    cfg = copy.deepcopy(config) if config is not None else recipe_base_config(seed)
    cfg.seed = seed
    cfg.data.seed = seed
    save_config(cfg, report_dir / "config.yaml")

    data_dir = report_dir / "data"
    save_manifest(build_dataset(cfg.data), data_dir)

    report = ablate(
        cfg,
        data_dir,
        recipe.param,
        list(recipe.values),
        report_dir,
        seeds=[seed],
        parallel=parallel,
    )

    properties = []
    for prop_name, check in recipe.properties:
        passed, detail = check(report)
        properties.append({"name": prop_name, "passed": bool(passed), "detail": detail})
    (report_dir / "properties.json").write_text(json.dumps(properties, indent=2) + "\n")

    table = format_table(
        ["value", "rank1", "rank5", "rank10", "mAP"],
        [
            [r["value"], f"{r['rank1']:.4f}", f"{r['rank5']:.4f}", f"{r['rank10']:.4f}", f"{r['map']:.4f}"]
            for r in report.summary_rows
        ],
    )
    prop_lines = [
        f"[{'pass' if p['passed'] else 'FAIL'}] {p['name']}: {p['detail']}" for p in properties
    ]
    (report_dir / "summary.txt").write_text(
        f"recipe: {name}\n{recipe.description}\n\n{table}\n\n" + "\n".join(prop_lines) + "\n"
    )
    return RecipeResult(name=name, report=report, properties=properties, out_dir=report_dir)
