"""Checkpoint system for resuming multi-stage continuation runs."""
import json
import re
from dataclasses import asdict, dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .domain import AccessoryState, DomainSpec
from .logging_config import get_logger

logger = get_logger("checkpoint")

_SAFE_NAME = re.compile(r"[^A-Za-z0-9_.-]+")


@dataclass
class Checkpoint:
    """Post-merge state after a completed stage."""

    checkpoint_id: str
    timestamp: str
    config_name: str
    stage_index: int
    total_stages: int
    modulus: float

    # Map at the end of the stage
    state: Dict[str, Any]
    domain: Dict[str, Any]

    @property
    def percent_complete(self) -> float:
        if self.total_stages == 0:
            return 100.0
        return (self.stage_index + 1) / self.total_stages * 100

    def restore(self) -> Tuple[AccessoryState, DomainSpec]:
        return AccessoryState.from_dict(self.state), DomainSpec.from_dict(self.domain)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return asdict(self)


class CheckpointManager:
    """Manages per-stage checkpoints of a pipeline run."""

    def __init__(self, checkpoint_dir: str = "data/checkpoints", max_checkpoints: Optional[int] = None):
        """
        Initialize checkpoint manager.

        Args:
            checkpoint_dir: Directory for storing checkpoints
            max_checkpoints: Keep only the last N checkpoints per config (None keeps all)
        """
        self.checkpoint_dir = Path(checkpoint_dir)
        self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        self.max_checkpoints = max_checkpoints

    @staticmethod
    def _prefix(config_name: str) -> str:
        return _SAFE_NAME.sub("_", config_name or "pipeline")

    def create_checkpoint(
        self,
        config_name: str,
        stage_index: int,
        total_stages: int,
        state: AccessoryState,
        spec: DomainSpec,
    ) -> Checkpoint:
        """
        Create a checkpoint of the map after a stage.

        Args:
            config_name: Pipeline name, used to group checkpoints
            stage_index: Index of the completed stage
            total_stages: Number of stages in the pipeline
            state: Post-merge accessory parameters
            spec: Post-merge domain

        Returns:
            Checkpoint object
        """
        return Checkpoint(
            checkpoint_id=f"{self._prefix(config_name)}_stage{stage_index:03d}",
            timestamp=datetime.now().isoformat(),
            config_name=config_name,
            stage_index=stage_index,
            total_stages=total_stages,
            modulus=state.modulus,
            state=state.to_dict(),
            domain=spec.to_dict(),
        )

    def save_checkpoint(self, checkpoint: Checkpoint) -> str:
        """
        Save checkpoint to disk.

        Returns:
            Path to saved checkpoint file
        """
        filepath = self.checkpoint_dir / f"checkpoint_{checkpoint.checkpoint_id}.json"
        with open(filepath, "w") as f:
            json.dump(checkpoint.to_dict(), f, indent=2)
        logger.info(
            f"Checkpoint {checkpoint.checkpoint_id} saved "
            f"({checkpoint.percent_complete:.0f}% of {checkpoint.total_stages} stages)"
        )
        self._cleanup_old_checkpoints(checkpoint.config_name)
        return str(filepath)

    def load_checkpoint(self, checkpoint_id: str) -> Optional[Checkpoint]:
        """
        Load checkpoint from disk.

        Returns:
            Checkpoint object or None if not found or unreadable
        """
        filepath = self.checkpoint_dir / f"checkpoint_{checkpoint_id}.json"
        if not filepath.exists():
            return None
        try:
            with open(filepath, "r") as f:
                return Checkpoint(**json.load(f))
        except (OSError, json.JSONDecodeError, TypeError) as e:
            logger.error(f"Error loading checkpoint {checkpoint_id}: {e}")
            return None

    def _files(self, config_name: Optional[str] = None) -> List[Path]:
        pattern = f"checkpoint_{self._prefix(config_name)}_stage*.json" if config_name else "checkpoint_*.json"
        return sorted(self.checkpoint_dir.glob(pattern))

    def get_latest_checkpoint(self, config_name: Optional[str] = None) -> Optional[Checkpoint]:
        """
        Get the checkpoint of the furthest completed stage.

        Returns:
            Latest checkpoint or None if no checkpoints exist
        """
        checkpoints = [self.load_checkpoint(p.stem[len("checkpoint_"):]) for p in self._files(config_name)]
        checkpoints = [c for c in checkpoints if c is not None]
        if not checkpoints:
            return None
        return max(checkpoints, key=lambda c: c.stage_index)

    def delete_checkpoint(self, checkpoint_id: str) -> bool:
        """
        Delete a checkpoint.

        Returns:
            True if deleted, False if not found
        """
        filepath = self.checkpoint_dir / f"checkpoint_{checkpoint_id}.json"
        if filepath.exists():
            filepath.unlink()
            return True
        return False

    def clear_checkpoints(self, config_name: str) -> int:
        """
        Delete every checkpoint of one config.

        Returns:
            Number of files removed
        """
        removed = 0
        for filepath in self._files(self._prefix(config_name)):
            try:
                filepath.unlink()
                removed += 1
            except OSError as e:
                logger.error(f"Error deleting {filepath}: {e}")
        return removed

    def _cleanup_old_checkpoints(self, config_name: str) -> None:
        """Remove checkpoints beyond the max limit, oldest stages first."""
        if self.max_checkpoints is None:
            return
        files = self._files(config_name)
        for old in files[: max(0, len(files) - self.max_checkpoints)]:
            self.delete_checkpoint(old.stem[len("checkpoint_"):])
