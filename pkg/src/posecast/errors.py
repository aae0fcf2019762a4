"""Exception hierarchy shared across the package.

Exit-code mapping for the CLI lives in posecast.cli: usage errors are 2,
validation errors (everything below except DivergenceError) are 3, and
training divergence is 4.
"""


class PosecastError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(PosecastError):
    """A configuration value is invalid (bad enum, non-positive size, ...)."""


class ContractError(PosecastError):
    """Two values that must agree structurally do not (shape/topology mismatch)."""


class DatasetError(PosecastError):
    """A dataset file violates the documented schema."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + loc)
        self.path = path
        self.line = line


class VocabularyError(ConfigurationError):
    """A label is not in the provider's vocabulary."""

    def __init__(self, label, known):
        known = sorted(known)
        super().__init__(f"unknown label {label!r}; known labels: {known}")
        self.label = label
        self.known = known


class FeatureStoreError(PosecastError):
    """Base class for precomputed-feature container problems."""


class MissingFeatureError(FeatureStoreError):
    """The container has no entry for the requested id."""

    def __init__(self, feature_id, path):
        super().__init__(f"no features stored for id {feature_id!r} in {path}")
        self.feature_id = feature_id


class FeatureShapeError(FeatureStoreError):
    """Stored feature matrix does not match the expected shape."""


class CheckpointError(PosecastError):
    """Checkpoint file is unreadable or incompatible with the requested use."""


class DivergenceError(PosecastError):
    """Training loss became non-finite."""

    def __init__(self, step, last_good_checkpoint=None):
        msg = f"training diverged (non-finite loss) at step {step}"
        if last_good_checkpoint is not None:
            msg += f"; last good checkpoint: {last_good_checkpoint}"
        super().__init__(msg)
        self.step = step
        self.last_good_checkpoint = last_good_checkpoint
