"""Shared exception bases; concrete errors live next to the code that raises them."""


class PipelineError(Exception):
    """Base for domain failures (bad input data, unsegmentable image, ...).

    The CLI maps these to exit code 1; usage/config problems are a
    separate hierarchy mapped to exit code 2.
    """


class ConfigError(Exception):
    """Invalid configuration key or value. CLI exit code 2."""
