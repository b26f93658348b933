"""Operational shell: registry, async jobs, and the /v1 HTTP API."""

from semani.service.app import MaskStore, create_app
from semani.service.jobs import Job, JobStore
from semani.service.registry import CHECKPOINT_NAMES, ModelRegistry, resolve_home

__all__ = [
    "CHECKPOINT_NAMES",
    "Job",
    "JobStore",
    "MaskStore",
    "ModelRegistry",
    "create_app",
    "resolve_home",
]
