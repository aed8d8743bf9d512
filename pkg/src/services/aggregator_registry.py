from abc import ABC, abstractmethod
from typing import override

from ..models.aggregation_models import (
    AggregationResult,
    HraConfig,
    ReputationState,
    RuleConfig,
    UpdateSet,
)
from ..models.exceptions import UnknownRuleError
from ..models.scenario_models import AGGREGATION_RULES
from .aggregation_service import MEMORYLESS_RULES, aggregate
from .hra_service import aggregate_hra, effective_weights

KRUM_FAMILY = ("krum", "multi_krum", "bulyan")


class Aggregator(ABC):
    """
    Server-side rule as seen by the simulator. One instance lives for one run.
    """

    name: str

    @abstractmethod
    def aggregate(self, updates: UpdateSet) -> AggregationResult:
        """Combine one round of client updates into the next global model."""
        pass

    @property
    def reputation(self) -> ReputationState | None:
        return None


class MemorylessAggregator(Aggregator):
    config: RuleConfig

    def __init__(self, name: str, config: RuleConfig):
        if name not in MEMORYLESS_RULES:
            raise UnknownRuleError(f"'{name}' is not a memoryless rule")
        self.name = name
        self.config = config

    @override
    def aggregate(self, updates: UpdateSet) -> AggregationResult:
        return aggregate(self.name, updates, self.config)


class HraAggregator(Aggregator):
    """Owns the reputation state and threads it through the rounds."""

    config: HraConfig
    state: ReputationState

    def __init__(self, config: HraConfig, client_ids: list[int]):
        self.name = "hra"
        self.config = config
        self.state = ReputationState.initial(client_ids, config.initial_reputation)

    @property
    @override
    def reputation(self) -> ReputationState:
        return self.state

    @override
    def aggregate(self, updates: UpdateSet) -> AggregationResult:
        prior = self.state
        params, self.state, diagnostics = aggregate_hra(updates, prior, self.config)
        return AggregationResult(
            params=params,
            weights=effective_weights(diagnostics),
            diagnostics={"hra": diagnostics, "prior_reputation": prior},
        )


def default_f(rule: str, n_clients: int) -> int:
    """floor((M - 3) / 2), capped to the rule's own bound."""
    f = max((n_clients - 3) // 2, 0)
    if rule == "bulyan":
        return min(f, max((n_clients - 3) // 4, 0))
    return min(f, max(n_clients - 3, 0))


def resolve_rule_config(rule: str, n_clients: int, overrides: RuleConfig) -> RuleConfig:
    """Fills the defaults the chosen rule needs; explicit values are kept."""
    if rule not in AGGREGATION_RULES:
        raise UnknownRuleError(
            f"unknown aggregation rule '{rule}'; available: {', '.join(AGGREGATION_RULES)}"
        )
    update: dict[str, int] = {}
    if rule in KRUM_FAMILY and overrides.f is None:
        update["f"] = default_f(rule, n_clients)
    if rule == "multi_krum" and overrides.multi_krum_m is None:
        f = update.get("f", overrides.f)
        assert f is not None
        update["multi_krum_m"] = max(n_clients - f - 2, 1)
    if rule == "trimmed_mean" and overrides.trim is None:
        update["trim"] = n_clients // 5
    return overrides.model_copy(update=update)


RULE_SETTINGS: dict[str, tuple[str, ...]] = {
    "krum": ("f",),
    "multi_krum": ("f", "multi_krum_m"),
    "bulyan": ("f",),
    "trimmed_mean": ("trim",),
}


def resolved_settings(rule: str, config: RuleConfig) -> dict[str, int | None]:
    """The rule-specific values a run actually used, for the manifest."""
    return {key: getattr(config, key) for key in RULE_SETTINGS.get(rule, ())}


def build_aggregator(
    rule: str, n_clients: int, rule_config: RuleConfig, hra_config: HraConfig
) -> Aggregator:
    if rule == "hra":
        return HraAggregator(hra_config, list(range(n_clients)))
    return MemorylessAggregator(rule, resolve_rule_config(rule, n_clients, rule_config))
