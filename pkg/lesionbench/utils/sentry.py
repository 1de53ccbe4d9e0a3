import sentry_sdk

from lesionbench.utils.config import config

_initialized = False


def init_sentry() -> bool:
    """Initialise Sentry error reporting when a DSN is configured.

    Returns:
        True when reporting is active.
    """
    global _initialized
    if _initialized:
        return True
    if not config.SENTRY_DSN:
        return False
    sentry_sdk.init(
        dsn=config.SENTRY_DSN,
        traces_sample_rate=config.SENTRY_TRACES_SAMPLE_RATE,
        environment=config.ENV_MODE.value,
        send_default_pii=False,
    )
    _initialized = True
    return True


sentry = sentry_sdk
