"""Exception types shared across the package."""


class NrdispError(Exception):
    """Base class for all package errors."""


class NoPhysicalSolution(NrdispError):
    """Inversion to effective parameters requires a negative rate or similar."""

    def __init__(self, constraint: str, detail: str = ""):
        self.constraint = constraint
        msg = f"no physical solution: {constraint}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DegenerateDecay(NrdispError):
    """A closed form divides by a vanishing complex rate."""


class SingularAtFrequency(NrdispError):
    pass


class TruncationLeak(NrdispError):
    """Population at the top Fock level exceeded the leak threshold."""


class IntegratorFailure(NrdispError):
    pass


class FitFailure(NrdispError):
    pass


class RatioUndefined(NrdispError):
    pass


class TooFewValidSamples(NrdispError):
    pass


class ConfigError(NrdispError):
    pass
