from enum import StrEnum

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .exceptions import FieldConflict


class AttackKind(StrEnum):
    NONE = "none"
    LABEL_FLIPPING = "label_flipping"
    NOISE = "noise"
    SIGN_FLIPPING = "sign_flipping"
    BACKDOOR = "backdoor"
    SYBIL = "sybil"


class AttackConfig(BaseModel):
    """
    Attack magnitudes. None of these are published, so every default here is a
    choice that visibly moves a logistic model trained on standardized data.
    """

    model_config = ConfigDict(extra="forbid")

    malicious_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    kinds: list[AttackKind] = Field(default_factory=list)
    noise_std: float = Field(default=1.0, gt=0.0)
    amplification: float = Field(default=3.0, gt=0.0)
    trigger_magnitude: float = 5.0
    # Capped at the feature count when applied.
    trigger_coordinates: int = Field(default=5, ge=1)
    sybil_scale: float = Field(default=10.0, gt=0.0)
    sybil_collusion: bool = False

    @model_validator(mode="after")
    def kinds_required_when_malicious(self) -> "AttackConfig":
        if self.malicious_fraction > 0 and not self.kinds:
            raise FieldConflict(
                "kinds must be non-empty when malicious_fraction > 0",
                fields=("malicious_fraction", "kinds"),
            )
        if AttackKind.NONE in self.kinds:
            raise ValueError("kinds must list attacks, not 'none'")
        return self


class ClientRoster(BaseModel):
    """Which attack (if any) each client runs. Fixed for a whole run."""

    model_config = ConfigDict(frozen=True)

    kinds: dict[int, AttackKind]

    @property
    def n_clients(self) -> int:
        return len(self.kinds)

    def kind_of(self, client_id: int) -> AttackKind:
        return self.kinds[client_id]

    def malicious_clients(self) -> list[int]:
        return sorted(cid for cid, k in self.kinds.items() if k != AttackKind.NONE)
