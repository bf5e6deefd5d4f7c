"""
Named registries for graph builders and GNN architectures.

Builders and architectures register themselves with a decorator, and the
benchmark harness, CLI and service look them up by name.
"""

import logging
from typing import Any, Callable, Dict, Generic, List, Optional, TypeVar

from popgraph.errors import ConfigError

T = TypeVar("T")


class RegistryEntry(Generic[T]):
    """
    Information about a registered component.
    """

    def __init__(self, name: str, component: T, metadata: Optional[Dict[str, Any]] = None):
        self.name = name
        self.component = component
        self.metadata = metadata or {}


class Registry(Generic[T]):
    """
    Ordered name → component registry.

    Registration order is preserved; it defines the canonical row/column
    order of benchmark reports.
    """

    def __init__(self, kind: str, logger: Optional[logging.Logger] = None):
        self._kind = kind
        self._logger = logger or logging.getLogger(__name__)
        self._entries: Dict[str, RegistryEntry[T]] = {}

    def register(
        self,
        name: str,
        component: T,
        metadata: Optional[Dict[str, Any]] = None,
        replace: bool = False
    ) -> T:
        """
        Register a component.

        Args:
            name: Unique name
            component: Object to register
            metadata: Optional descriptive metadata
            replace: Whether to replace an existing component with the same name

        Returns:
            The registered component (so the method can back a decorator)

        Raises:
            ValueError: If name already exists and replace=False
        """
        if name in self._entries and not replace:
            raise ValueError(f"{self._kind} '{name}' already registered. Use replace=True to override.")
        self._entries[name] = RegistryEntry(name, component, metadata)
        self._logger.debug(f"[Registry] Registered {self._kind} '{name}'")
        return component

    def __call__(self, name: str, **metadata: Any) -> Callable[[T], T]:
        """
        Decorator form of :meth:`register`.

        Example:
            @BUILDERS("knn-imaging", source="imaging")
            def build_knn_imaging(cohort, config): ...
        """
        def decorator(component: T) -> T:
            return self.register(name, component, metadata)
        return decorator

    def get(self, name: str) -> T:
        """
        Look up a component by name.

        Raises:
            ConfigError: If the name is unknown
        """
        entry = self._entries.get(name)
        if entry is None:
            raise ConfigError(
                f"unknown {self._kind} '{name}'. Available: {', '.join(self._entries)}"
            )
        return entry.component

    def metadata(self, name: str) -> Dict[str, Any]:
        """Metadata registered with a component."""
        self.get(name)
        return dict(self._entries[name].metadata)

    def names(self) -> List[str]:
        """Registered names in registration order."""
        return list(self._entries)

    def order_of(self, name: str) -> int:
        """Position of a name in registration order (unknown names sort last)."""
        names = self.names()
        return names.index(name) if name in names else len(names)

    def __contains__(self, name: object) -> bool:
        return name in self._entries
