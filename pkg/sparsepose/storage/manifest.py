import json
import logging
import os
from datetime import datetime, timezone

from sparsepose import __version__

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'

class RunManifest:
    """Record of one run: configuration, seed and the artifacts it produced"""

    def __init__(self, run_dir, command, config):
        """
        Initialize a run manifest

        Args:
            run_dir (str): Directory all outputs of the run go to
            command (str): Subcommand name
            config (dict): Exact configuration of the run
        """
        self.run_dir = run_dir
        self.command = command
        self.config = config
        self.artifacts = []
        self.started_at = datetime.now(timezone.utc).isoformat()
        self.finished_at = None

    @property
    def path(self):
        return os.path.join(self.run_dir, MANIFEST_NAME)

    def artifact(self, name):
        """Path of a named artifact inside the run directory, recorded in the manifest"""
        os.makedirs(self.run_dir, exist_ok=True)
        if name not in self.artifacts:
            self.artifacts.append(name)
        return os.path.join(self.run_dir, name)

    def to_dict(self):
        return {
            'command': self.command,
            'version': __version__,
            'config': self.config,
            'seed': self.config.get('seed'),
            'artifacts': list(self.artifacts),
            'started_at': self.started_at,
            'finished_at': self.finished_at,
        }

    def save(self):
        self.finished_at = datetime.now(timezone.utc).isoformat()
        os.makedirs(self.run_dir, exist_ok=True)
        with open(self.path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True, default=str)
        logger.info(f"Run manifest written to {self.path} ({len(self.artifacts)} artifacts)")

    @staticmethod
    def load(run_dir):
        with open(os.path.join(run_dir, MANIFEST_NAME), 'r') as f:
            return json.load(f)
