"""Run configuration shared by the library entry points and the CLI."""

from dataclasses import dataclass, field, fields

ALGORITHMS = ("scvi-hmm", "scvi-hdphmm", "svi-hmm")


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending field."""


@dataclass
class RunConfig:
    """Training settings.

    Defaults follow the reference experimental setup: symmetric 0.1
    transition and emission priors, Gamma(1, 0.1) concentration priors,
    kappa 0.5 with minibatches of 1000, a large batch of 10000 for the
    hierarchical updates, and truncation 45.  The step-size theory wants
    kappa strictly above 0.5; 0.5 itself is the boundary value used in
    practice and is accepted.
    """

    algorithm: str = "scvi-hmm"
    num_states: int = 45
    kappa: float = 0.5
    minibatch_size: int = 1000
    large_batch_size: int = 10000
    passes: int = 10
    budget_seconds: float = None
    trans_prior: float = 0.1
    emit_prior: float = 0.1
    alpha_prior_shape: float = 1.0
    alpha_prior_rate: float = 0.1
    gamma_prior_shape: float = 1.0
    gamma_prior_rate: float = 0.1
    seed: int = 0
    batch_mode: str = "shuffle"
    eval_every_steps: int = None
    threads: int = 1

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not isinstance(self.num_states, int) or self.num_states < 1:
            raise ConfigError(f"num_states must be a positive integer, got {self.num_states!r}")
        if not 0.5 <= self.kappa <= 1.0:
            raise ConfigError(f"kappa must lie in [0.5, 1], got {self.kappa!r}")
        if not isinstance(self.minibatch_size, int) or self.minibatch_size < 1:
            raise ConfigError(f"minibatch_size must be a positive integer, got {self.minibatch_size!r}")
        if not isinstance(self.large_batch_size, int) or self.large_batch_size < self.minibatch_size:
            raise ConfigError(
                f"large_batch_size must be an integer >= minibatch_size, got {self.large_batch_size!r}"
            )
        if not isinstance(self.passes, int) or self.passes < 0:
            raise ConfigError(f"passes must be a nonnegative integer, got {self.passes!r}")
        if self.budget_seconds is not None and self.budget_seconds <= 0:
            raise ConfigError(f"budget_seconds must be positive, got {self.budget_seconds!r}")
        for name in ("trans_prior", "emit_prior", "alpha_prior_shape",
                     "alpha_prior_rate", "gamma_prior_shape", "gamma_prior_rate"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if self.batch_mode not in ("shuffle", "iid"):
            raise ConfigError(f"batch_mode must be 'shuffle' or 'iid', got {self.batch_mode!r}")
        if self.eval_every_steps is not None and self.eval_every_steps < 1:
            raise ConfigError(f"eval_every_steps must be >= 1, got {self.eval_every_steps!r}")
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError(f"threads must be a positive integer, got {self.threads!r}")
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)
