class DeanonError(Exception):
    """Base class for every error raised by the toolkit."""


class GraphParseError(DeanonError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class MissingNodeError(DeanonError):
    def __init__(self, node):
        super().__init__(f"node {node} is not in the graph")
        self.node = node


class ConfigError(DeanonError):
    pass


class EgoExhaustionError(DeanonError):
    def __init__(self, requested: int, achievable: int, min_egonet_nodes: int):
        super().__init__(
            f"requested {requested} egos but only {achievable} nodes have "
            f"more than {min_egonet_nodes} nodes within 2 hops"
        )
        self.requested = requested
        self.achievable = achievable


class UnsupportedSchemeError(DeanonError):
    pass


class TrainingError(DeanonError):
    pass


class ModelFormatError(DeanonError):
    pass


class ModelVersionError(ModelFormatError):
    pass


class FeatureMismatchError(DeanonError):
    pass


class EvaluationError(DeanonError):
    pass


class StageError(DeanonError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
