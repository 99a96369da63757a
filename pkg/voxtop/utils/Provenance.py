import json
import logging
import platform
import sys
import typing
from datetime import datetime
from pathlib import Path

import git
import numpy as np
import scipy

import voxtop


def describe_version(path: Path = Path(".")) -> typing.Optional[str]:
    """
    `git describe` of the checkout containing path, or None outside a tagged git checkout
    """
    try:
        repo = git.Repo(path, search_parent_directories=True)
        return repo.git.describe("--tags", "--always", "--dirty")
    except (git.InvalidGitRepositoryError, git.NoSuchPathError, git.GitCommandError):
        return None


def build_provenance(command: str, config: dict, argv: typing.Sequence[str]) -> dict:
    """
    Provenance record: command, config echo, seeds & software versions

    created_utc is the only field that differs between identical re-runs
    """
    return {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": config.get("seed"),
        "versions": {
            "voxtop": voxtop.__version__,
            "git": describe_version(Path(__file__).parent),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "platform": sys.platform,
        "created_utc": datetime.utcnow().strftime("%Y-%m-%d %H:%M:%S"),
    }


def write_provenance(outdir: Path, command: str, config: dict, argv: typing.Sequence[str]):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with (outdir / "provenance.json").open(mode="w") as fID:
        json.dump(build_provenance(command, config, argv), fID, indent=2, sort_keys=True)
    logging.info(f"Wrote provenance for '{command}' to '{outdir}'")
