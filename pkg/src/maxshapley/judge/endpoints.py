from __future__ import annotations

from dataclasses import asdict, dataclass

from maxshapley.errors import UsageError
from maxshapley.ledger import TokenLedger

API_SHAPES = ("openai", "anthropic", "mock")


@dataclass(frozen=True)
class EndpointConfig:
    """Where and how to reach a chat model, plus its per-1K-token prices.

    The API key itself is never stored; only the name of the environment
    variable holding it.
    """

    model_name: str = "mock"
    api: str = "mock"
    base_url: str = ""
    api_key_env: str = ""
    temperature: float = 0.0
    request_timeout: float = 60.0
    max_retries: int = 3
    backoff_seconds: float = 0.5
    max_tokens: int = 1024
    max_in_flight: int = 4
    price_in: float = 0.0
    price_out: float = 0.0

    def __post_init__(self):
        if self.api not in API_SHAPES:
            raise UsageError(f"unknown api shape {self.api!r}; expected one of {API_SHAPES}")
        if self.temperature < 0:
            raise UsageError("temperature must be >= 0")
        if self.price_in < 0 or self.price_out < 0:
            raise UsageError("prices must be >= 0")
        if self.request_timeout <= 0:
            raise UsageError("request_timeout must be > 0")
        if self.max_retries < 1:
            raise UsageError("max_retries must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "EndpointConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown endpoint fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_cost(ledger: TokenLedger, endpoint: EndpointConfig) -> float:
    """Dollar cost of a ledger at the endpoint's per-1K-token prices."""
    return ledger.tokens_in / 1000 * endpoint.price_in + ledger.tokens_out / 1000 * endpoint.price_out
