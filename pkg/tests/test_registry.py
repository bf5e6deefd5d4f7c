import pytest

from popgraph.builders import BUILDERS
from popgraph.errors import ConfigError
from popgraph.registry import Registry


def test_decorator_registration_and_lookup():
    registry = Registry("widget")

    @registry("first", colour="red")
    def first():
        return 1

    registry.register("second", lambda: 2)
    assert registry.get("first") is first
    assert registry.metadata("first") == {"colour": "red"}
    assert registry.names() == ["first", "second"]
    assert registry.order_of("second") == 1
    assert registry.order_of("third") == 2
    assert "first" in registry and "third" not in registry


def test_duplicate_names_are_rejected():
    registry = Registry("widget")
    registry.register("a", 1)
    with pytest.raises(ValueError):
        registry.register("a", 2)
    registry.register("a", 3, replace=True)
    assert registry.get("a") == 3


def test_unknown_name_lists_the_alternatives():
    with pytest.raises(ConfigError, match="knn-imaging"):
        BUILDERS.get("spectral")


def test_builder_order():
    assert BUILDERS.names() == [
        "no-edges", "random", "clinical-sim", "parisot", "knn-imaging", "knn-nonimaging", "knn-all",
    ]
