from typing import Sequence
from pathlib import Path
from dataclasses import field, dataclass

import torch
from tqdm import tqdm

from soundsep.semantic.base import TrainerOptions, _default_trainer_args
from soundsep.semantic.clip import AudioClip
from soundsep.semantic.exceptions import ShapeError, ConfigurationError
from soundsep.semantic.objectives.oracle import oracle_binary_mask
from soundsep.semantic.harness.model import SeparationSystem, restore_system
from soundsep.semantic.harness.config import ExperimentConfig
from soundsep.semantic.harness.checkpoint import Checkpoint
from soundsep.semantic.synthdata.dataset import write_wav


@dataclass
class SemanticSeparation:
    """Inference runtime for a trained separation setting."""

    config: ExperimentConfig
    system: SeparationSystem | None = None
    """Trained system; None for the binary-mask oracle, which has no parameters."""

    sample_rate: int = 16000
    """Rate the system was trained at; inputs must match it."""

    options: TrainerOptions = field(default_factory=_default_trainer_args)
    """Only `progress` is used, for `multi_run`."""

    def __post_init__(self):
        self.options = TrainerOptions({**_default_trainer_args(), **self.options})
        if self.system is None and self.config.spec.trainable:
            raise ConfigurationError(
                f"{self.config.setting.value} needs a trained system"
            )
        if self.system is not None:
            self.system.eval()

    @classmethod
    def from_checkpoint(
        cls, checkpoint: Checkpoint | str | Path
    ) -> "SemanticSeparation":
        if not isinstance(checkpoint, Checkpoint):
            checkpoint = Checkpoint.load(checkpoint)
        config, system = restore_system(checkpoint)
        return cls(config, system, int(checkpoint.metadata["sample_rate"]))

    def run(
        self, mixture: AudioClip, sources: Sequence[AudioClip] | None = None
    ) -> list[AudioClip]:
        """Separate one mixture and return the final-stage estimates.

        Args
            mixture (AudioClip):
                The mixture to separate.
            sources (Sequence[AudioClip] | None):
                Clean references; required by the oracle settings, refused by
                every other one.

        Returns
            One clip per estimated source.

        """
        if mixture.sample_rate != self.sample_rate:
            raise ShapeError(
                f"mixture is at {mixture.sample_rate} Hz, "
                f"the system runs at {self.sample_rate} Hz"
            )
        spec, name = self.config.spec, self.config.setting.value
        if spec.oracle or not spec.trainable:
            if sources is None:
                raise ConfigurationError(f"{name} needs the clean sources")
        elif sources is not None:
            raise ConfigurationError(f"{name} must not see the sources")

        if self.system is None:
            return oracle_binary_mask(mixture, sources).clips()

        dtype = next(self.system.parameters()).dtype
        oracle = None
        if sources is not None:
            oracle = torch.stack([s.to_tensor(dtype) for s in sources])
        with torch.no_grad():
            output = self.system(mixture.to_tensor(dtype), oracle_sources=oracle)
        return output.final.clips()

    def multi_run(
        self,
        mixtures: Sequence[AudioClip],
        sources: Sequence[Sequence[AudioClip]] | None = None,
    ) -> list[list[AudioClip]]:
        """Run `run` on every mixture, in order."""
        if sources is not None and len(sources) != len(mixtures):
            raise ShapeError(f"{len(sources)} source sets for {len(mixtures)} mixtures")
        results = []
        for i, mixture in enumerate(
            tqdm(mixtures, disable=not self.options["progress"], desc="separate")
        ):
            results.append(self.run(mixture, None if sources is None else sources[i]))
        return results


def write_estimates(
    estimates: Sequence[AudioClip], out_dir: str | Path, stem: str
) -> list[Path]:
    """One 16-bit WAV per estimate, named `<stem>_est<i>.wav`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, clip in enumerate(estimates):
        path = out_dir / f"{stem}_est{i}.wav"
        write_wav(path, clip)
        paths.append(path)
    return paths
