"""Exception hierarchy shared by all stages."""


class DceError(Exception):
    """Base class for simulator errors."""


class NumericalError(DceError):
    """A numeric stage failed (CLI exit code 3)."""


class DivergenceError(NumericalError):
    def __init__(self, step, norm):
        super().__init__(f"LLE integration diverged at step {step} (rms amplitude {norm:.3g})")
        self.step = step
        self.norm = norm


class ConvergenceError(NumericalError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (final residual {residual:.3e})")
        self.residual = residual


class NoSolitonError(NumericalError):
    pass


class TimeResolutionError(NumericalError):
    pass


class AliasingError(NumericalError):
    pass


class ResonanceError(NumericalError):
    pass


class HermiticityError(NumericalError):
    pass


class StiffnessError(NumericalError):
    pass


class EigenSolverError(NumericalError):
    pass


class CapacityError(DceError):
    pass


class StateError(DceError, ValueError):
    """Invalid quantum state for the requested operation."""


class InvariantError(NumericalError):
    def __init__(self, stage, failures):
        names = ", ".join(failures)
        super().__init__(f"invariant checks failed in stage {stage!r}: {names}")
        self.stage = stage
        self.failures = list(failures)


class ConfigError(DceError):
    """Configuration problems (CLI exit code 2); carries every problem found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


STAGE_VERBS = {
    "soliton": "soliton",
    "modulation": "modulate",
    "hamiltonian": "hamiltonian",
    "evolution": "evolve",
    "analysis": "analyze",
}


class DependencyError(DceError):
    """A required upstream artifact is missing (CLI exit code 4)."""

    def __init__(self, stage, detail=""):
        verb = STAGE_VERBS.get(stage, stage)
        msg = f"missing artifact for stage {stage!r}; run `dcesim {verb}` first"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.stage = stage
