class LabError(Exception):  # root of every error raised by the lab
    pass


class ShapeError(LabError, ValueError):  # incompatible operand shapes for a primitive op
    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        dims = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {dims}")


class AutogradError(LabError):
    pass


class NonFiniteError(LabError, FloatingPointError):  # NaN/inf produced by an op or found in gradients
    def __init__(self, where):
        self.where = where
        super().__init__(f"non-finite values in {where}")


class TokenizerError(LabError, ValueError):
    pass


class DataError(LabError, ValueError):
    pass


class CheckpointError(LabError):
    pass


class ConfigError(LabError, ValueError):
    pass


class SolverError(LabError):
    pass


class ProbeError(LabError):
    pass


class InterventionError(LabError, ValueError):
    pass


class TrainingHalted(LabError):  # training stopped on a non-finite loss or gradient
    def __init__(self, message, step, checkpoint=None):
        self.step = step
        self.checkpoint = checkpoint
        super().__init__(f"{message} at step {step}" + (f" (last good checkpoint: {checkpoint})" if checkpoint else ""))


class PrerequisiteError(LabError):  # an artifact needed by a command is missing
    def __init__(self, missing, command):
        self.missing = missing
        self.command = command
        super().__init__(f"missing {missing}; run `matcomp-lab {command}` first")
