import numpy as np
import structlog

from ..models.attack_models import AttackConfig, AttackKind, ClientRoster
from ..models.exceptions import ConfigError, ModelShapeError
from ..models.learning_models import ModelParams
from .data_service import SeedLike

logger = structlog.stdlib.get_logger()

# Leading entropy words that keep the per-round streams apart from each other
# and from the run-level partition and roster streams.
CLIENT_STREAM = 2
SYBIL_STREAM = 3


def client_stream(run_seed: int, round_index: int, client_id: int) -> np.random.Generator:
    """Per-client randomness for one round, independent of execution order."""
    return np.random.default_rng([run_seed, CLIENT_STREAM, round_index, client_id])


def sybil_stream(run_seed: int, round_index: int) -> np.random.Generator:
    """The stream colluding sybils share: every sybil draws the same perturbation."""
    return np.random.default_rng([run_seed, SYBIL_STREAM, round_index])


def flip_labels(y: np.ndarray) -> np.ndarray:
    return 1 - y


def apply_post_training_attack(
    kind: AttackKind,
    global_params: ModelParams,
    local: ModelParams,
    cfg: AttackConfig,
    rng: np.random.Generator,
) -> ModelParams:
    if global_params.dim != local.dim:
        raise ModelShapeError(
            f"global model has {global_params.dim} weights, local has {local.dim}"
        )
    d = local.dim

    match kind:
        case AttackKind.NONE | AttackKind.LABEL_FLIPPING:
            return local
        case AttackKind.NOISE:
            z = rng.normal(0.0, cfg.noise_std, size=d + 1)
            return ModelParams(w=local.w + z[:d], b=local.b + float(z[d]))
        case AttackKind.SIGN_FLIPPING:
            A = cfg.amplification
            return ModelParams(
                w=global_params.w - A * (local.w - global_params.w),
                b=global_params.b - A * (local.b - global_params.b),
            )
        case AttackKind.BACKDOOR:
            k = min(cfg.trigger_coordinates, d)
            w = local.w.copy()
            w[:k] += cfg.trigger_magnitude
            return ModelParams(w=w, b=local.b)
        case AttackKind.SYBIL:
            z = rng.normal(0.0, cfg.sybil_scale, size=d + 1)
            return ModelParams(w=local.w + z[:d], b=local.b + float(z[d]))


def assign_attacks(
    n_clients: int, malicious_fraction: float, kinds: list[AttackKind], seed: SeedLike
) -> ClientRoster:
    """
    floor(fraction * M) clients are drawn without replacement; they receive
    `kinds` round-robin in ascending client-id order.
    """
    # absorbs representation error such as 0.29 * 100 == 28.999999999999996
    n_malicious = int(np.floor(malicious_fraction * n_clients + 1e-9))
    roster = {cid: AttackKind.NONE for cid in range(n_clients)}
    if n_malicious == 0:
        return ClientRoster(kinds=roster)
    if not kinds:
        raise ConfigError(
            "attack kinds must be non-empty when malicious_fraction > 0",
            keys=["attacks.kinds"],
        )

    rng = np.random.default_rng(seed)
    chosen = sorted(int(c) for c in rng.choice(n_clients, size=n_malicious, replace=False))
    for i, cid in enumerate(chosen):
        roster[cid] = kinds[i % len(kinds)]

    logger.debug(
        "attacks.assigned",
        malicious={cid: str(roster[cid]) for cid in chosen},
    )
    return ClientRoster(kinds=roster)


def malicious_clients(roster: ClientRoster) -> list[int]:
    return roster.malicious_clients()
