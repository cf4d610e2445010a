"""Shared exception types."""


class OutOfAreaError(ValueError):
    """Geolocation lies outside the scenario area."""


class SingularChannelError(ValueError):
    """Effective channel H@W is rank deficient; the precoder hypothesis is unusable."""


class NoValidPrecoderError(ValueError):
    """Every precoder hypothesis in the codebook was singular."""


class InfeasibleProblemError(ValueError):
    """Allocation problem violates W >= Q*M and admits no feasible matching."""
