"""Recipe discovery and smoke validation.

A recipe is a directory ``recipes/<name>/`` holding a ``config`` document,
a ``README.md``, and an ``expected/`` folder with ``files.txt`` (artifact
checklist, one relative path per line) and ``criteria.txt`` (acceptance
check ids this recipe feeds). ``validate_recipes`` executes each recipe at
smoke scale (replications forced down) and verifies the checklist.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from .runconfig import parse_config_text

SMOKE_OVERRIDES = {
    "experiment.replications": 1,
    "experiment.attribution_seeds": 1,
}


class RecipeError(ValueError):
    pass


@dataclass
class Recipe:
    name: str
    path: str
    config_path: str
    expected_files: List[str]
    criteria: List[str] = field(default_factory=list)


def discover_recipes(root: str) -> List[Recipe]:
    """Enumerate well-formed recipe directories under ``root``."""
    if not os.path.isdir(root):
        raise RecipeError(f"recipes directory '{root}' does not exist")
    recipes = []
    for name in sorted(os.listdir(root)):
        rdir = os.path.join(root, name)
        if not os.path.isdir(rdir):
            continue
        config_path = os.path.join(rdir, "config")
        files_path = os.path.join(rdir, "expected", "files.txt")
        if not os.path.isfile(config_path):
            raise RecipeError(f"recipe '{name}' is missing its config file")
        if not os.path.isfile(os.path.join(rdir, "README.md")):
            raise RecipeError(f"recipe '{name}' is missing README.md")
        if not os.path.isfile(files_path):
            raise RecipeError(f"recipe '{name}' is missing expected/files.txt")
        with open(files_path) as fh:
            expected = [line.strip() for line in fh if line.strip()]
        criteria_path = os.path.join(rdir, "expected", "criteria.txt")
        criteria = []
        if os.path.isfile(criteria_path):
            with open(criteria_path) as fh:
                criteria = [line.strip() for line in fh if line.strip()]
        with open(config_path) as fh:
            parse_config_text(fh.read())  # reject malformed configs early
        recipes.append(
            Recipe(
                name=name,
                path=rdir,
                config_path=config_path,
                expected_files=expected,
                criteria=criteria,
            )
        )
    if not recipes:
        raise RecipeError(f"no recipes found under '{root}'")
    return recipes


def smoke_config_text(recipe: Recipe, overrides: Optional[Dict[str, object]] = None) -> str:
    """Recipe config with smoke-scale keys appended (later keys would clash,
    so existing lines are rewritten)."""
    effective = dict(SMOKE_OVERRIDES)
    if overrides:
        effective.update(overrides)
    with open(recipe.config_path) as fh:
        lines = fh.read().splitlines()
    out = []
    seen = set()
    for line in lines:
        stripped = line.split("#", 1)[0].strip()
        key = stripped.partition("=")[0].strip() if "=" in stripped else None
        if key in effective:
            out.append(f"{key} = {effective[key]}")
            seen.add(key)
        else:
            out.append(line)
    for key, value in effective.items():
        if key not in seen:
            out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"


def validate_recipe(
    recipe: Recipe,
    out_dir: Optional[str] = None,
    overrides: Optional[Dict[str, object]] = None,
) -> Dict:
    """Run one recipe at smoke scale; report file-checklist satisfaction."""
    from .cli import main as cli_main

    with tempfile.TemporaryDirectory() as tmp:
        target = out_dir or os.path.join(tmp, "out")
        config_path = os.path.join(tmp, "smoke.config")
        with open(config_path, "w") as fh:
            fh.write(smoke_config_text(recipe, overrides))
        code = cli_main(["benchmark", "--config", config_path, "--out", target, "--workers", "1"])
        missing = [
            rel for rel in recipe.expected_files
            if not os.path.isfile(os.path.join(target, rel))
        ]
        return {
            "recipe": recipe.name,
            "exit_code": code,
            "missing": missing,
            "passed": code == 0 and not missing,
        }


def validate_recipes(
    root: str,
    names: Optional[Sequence[str]] = None,
    overrides: Optional[Dict[str, object]] = None,
) -> List[Dict]:
    recipes = discover_recipes(root)
    if names is not None:
        wanted = set(names)
        unknown = wanted - {r.name for r in recipes}
        if unknown:
            raise RecipeError(f"unknown recipes requested: {sorted(unknown)}")
        recipes = [r for r in recipes if r.name in wanted]
    return [validate_recipe(r, overrides=overrides) for r in recipes]
