"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """A configuration file or configuration object is invalid."""


class DivergedClientError(RuntimeError):
    """Local training produced a non-finite loss or gradient."""

    def __init__(self, client_id: int, round_index: int, detail: str = ""):
        self.client_id = client_id
        self.round_index = round_index
        msg = f"client {client_id} diverged at round {round_index}"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class DivergedPolicyError(RuntimeError):
    """The policy network produced non-finite logits or gradients."""


class CheckpointWriteError(RuntimeError):
    """A policy checkpoint could not be written to disk."""
