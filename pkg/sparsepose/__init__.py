import logging
import os
import sys

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

__version__ = '1.0.0'

BLAS_THREAD_VARIABLES = ('OMP_NUM_THREADS', 'MKL_NUM_THREADS', 'OPENBLAS_NUM_THREADS',
                         'VECLIB_MAXIMUM_THREADS', 'NUMEXPR_NUM_THREADS')

# BLAS reads these once, when numpy is first imported
_threads_inherited = 'OMP_NUM_THREADS' in os.environ
_threads_pinned = 'numpy' not in sys.modules
for _variable in BLAS_THREAD_VARIABLES:
    os.environ.setdefault(_variable, '1')

logger = logging.getLogger(__name__)

def blas_threads():
    """
    Thread count the BLAS backend was started with

    Single-threaded unless the caller set ``OMP_NUM_THREADS`` before importing
    the package.

    Returns:
        int | None: None when numpy was loaded earlier without an explicit limit
    """
    if not (_threads_pinned or _threads_inherited):
        return None
    return int(os.environ.get('OMP_NUM_THREADS') or 1)

def configure_logging(level=logging.INFO):
    """
    Configure logging once at the root level

    Args:
        level (int | str): Root log level
    """
    from config.settings import Config

    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)

    logging.basicConfig(level=level, format=Config.LOG_FORMAT)
    logging.getLogger().setLevel(level)

    # PIL logs every decoded chunk at DEBUG
    logging.getLogger('PIL').setLevel(logging.WARNING)
    logger.debug(f"Logging configured at level {logging.getLevelName(level)}")
