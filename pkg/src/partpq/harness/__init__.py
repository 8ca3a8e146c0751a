"""Synthetic scenes, a brute-force reference evaluator and hand-built fixtures."""

from partpq.harness.fixtures import FIXTURES, Fixture, build_fixture
from partpq.harness.reference import reference_evaluate, reference_tallies
from partpq.harness.synth import (
    SceneRecipe,
    generate_scene,
    random_recipe,
    synthetic_spec,
)

__all__ = [
    "FIXTURES",
    "Fixture",
    "SceneRecipe",
    "build_fixture",
    "generate_scene",
    "random_recipe",
    "reference_evaluate",
    "reference_tallies",
    "synthetic_spec",
]
