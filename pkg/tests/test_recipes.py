"""Recipe corpus: discovery, docs-to-code drift, and a smoke execution."""

import os
import time

import pytest

from regen_tad.decisions import DECISIONS, render_markdown, verify_decision_refs
from regen_tad.recipes import RecipeError, discover_recipes, smoke_config_text, validate_recipe

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
RECIPES_DIR = os.path.join(REPO_ROOT, "recipes")

EXPECTED_RECIPES = {
    "structural_suite",
    "market_regime_suite",
    "horizon_sweep",
    "clean_fpr_audit",
    "sector_attribution",
}


def test_recipe_corpus_complete():
    recipes = discover_recipes(RECIPES_DIR)
    assert {r.name for r in recipes} == EXPECTED_RECIPES
    for r in recipes:
        assert r.expected_files, r.name
        assert r.criteria, r.name


def test_recipe_configs_parse_and_reference_known_criteria():
    recipes = discover_recipes(RECIPES_DIR)
    for recipe in recipes:
        for line in recipe.criteria:
            assert line.split()[0].startswith("A"), (recipe.name, line)


def test_missing_config_detected(tmp_path):
    broken = tmp_path / "recipes" / "broken"
    (broken / "expected").mkdir(parents=True)
    (broken / "README.md").write_text("x")
    (broken / "expected" / "files.txt").write_text("a.csv\n")
    with pytest.raises(RecipeError) as err:
        discover_recipes(str(tmp_path / "recipes"))
    assert "broken" in str(err.value)


def test_smoke_overrides_rewrite_existing_keys():
    recipes = {r.name: r for r in discover_recipes(RECIPES_DIR)}
    text = smoke_config_text(recipes["structural_suite"])
    assert "experiment.replications = 1" in text
    assert text.count("experiment.replications") == 1


def test_docs_to_code_drift():
    failures = verify_decision_refs()
    assert failures == []
    ids = [d.id for d in DECISIONS]
    assert len(ids) == len(set(ids))


def test_design_notes_rendered_current():
    rendered = render_markdown()
    path = os.path.join(REPO_ROOT, "docs", "design_notes.md")
    with open(path) as fh:
        on_disk = fh.read()
    assert rendered.strip() in on_disk


def test_structural_recipe_smoke_run_within_budget():
    recipes = {r.name: r for r in discover_recipes(RECIPES_DIR)}
    start = time.time()
    outcome = validate_recipe(
        recipes["structural_suite"],
        overrides={
            "experiment.replications": 1,
            "experiment.mechanisms": "mean-shift",
            "experiment.gammas": 0.05,
            "backbone.epochs": 4,
            "purify.epochs": 2,
            "purify.max_iterations": 1,
        },
    )
    elapsed = time.time() - start
    assert outcome["passed"], outcome
    assert elapsed < 600.0  # measured budget: smoke scale completes well inside
