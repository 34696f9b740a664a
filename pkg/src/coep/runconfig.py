"""Flat key=value run configuration with CLI overrides.

The file format is one ``key = value`` per line, ``#`` comments allowed;
minimal and diff-friendly.  Every run echoes its fully-resolved config next
to its outputs so results stay reproducible from the artifacts alone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError


@dataclass
class RunConfig:
    seed: int = 7
    data_dir: str = "data"
    # model
    d_model: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ffn_dim: int = 256
    max_positions: int = 128
    dropout: float = 0.1
    # optimizer (reference regime is lr 1e-5 / wd 0.01; random-init desk
    # models need the larger default step size)
    lr: float = 1e-3
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # stage budgets
    im_epochs: int = 2
    im_batch_size: int = 32
    im_max_steps: int = 0
    gm_epochs: int = 3
    gm_batch_size: int = 32
    gm_max_steps: int = 0
    feg_steps: int = 60
    feg_batch_size: int = 8
    # prompt training
    st_max_len: int = 12
    gs_temperature: float = 1.0
    gs_anneal: bool = False
    # ablation toggles
    skip_skg: bool = False
    skip_pt: bool = False
    skip_cls: bool = False
    prompts: str = "all"  # all | none | a single relation name
    # decoding / evaluation
    strategy: str = "topk"
    k: int = 4
    decode_max_len: int = 24
    decode_temperature: float = 1.0
    eval_limit: int = 96

    def model_config_dict(self) -> dict:
        return {
            "num_layers": self.num_layers,
            "d_model": self.d_model,
            "num_heads": self.num_heads,
            "ffn_dim": self.ffn_dim,
            "max_positions": self.max_positions,
            "dropout": self.dropout,
        }

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def echo(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, raw: str):
    field = _FIELDS.get(name)
    if field is None:
        raise DataError(f"unknown config key: {name!r}")
    raw = raw.strip()
    if field.type in ("int", int):
        return int(raw)
    if field.type in ("float", float):
        return float(raw)
    if field.type in ("bool", bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise DataError(f"config key {name}: expected a boolean, got {raw!r}")
    return raw


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then file values, then explicit overrides."""
    values: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise DataError(f"config file not found: {p}")
        for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{p}:{lineno}: expected key = value")
            key, raw = line.split("=", 1)
            values[key.strip()] = _coerce(key.strip(), raw)
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        values[key] = _coerce(key, str(raw))
    return RunConfig(**values)
