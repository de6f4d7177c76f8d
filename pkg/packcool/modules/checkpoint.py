# modules/checkpoint.py

import logging
from pathlib import Path
from typing import Dict, List

import numpy as np
import torch

from packcool.core.errors import CheckpointFormatError
from packcool.modules.autodiff import DTYPE
from packcool.modules.networks import Mlp

logger = logging.getLogger("packcool.checkpoint")

HEADER = "PACKCOOL-CKPT v1"
FOOTER = "end"


def _format_matrix(matrix: np.ndarray) -> List[str]:
    rows, cols = matrix.shape
    lines = [f"{rows} {cols}"]
    for row in matrix:
        lines.append(" ".join(format(float(x), ".17g") for x in row))
    return lines


def dumps_checkpoint(nets: Dict[str, Mlp]) -> str:
    """
    Text layout:
        PACKCOOL-CKPT v1
        net <name> <output_activation> <n_layers>
        then per layer the weight block and the bias block, each
        "rows cols" followed by one line per row of 17-significant-digit floats;
        a final "end" line marks a complete file.
    """
    lines = [HEADER]
    for name in sorted(nets):
        net = nets[name]
        lines.append(f"net {name} {net.output_activation} {len(net.layers)}")
        for layer in net.layers:
            lines.extend(_format_matrix(layer.weight.detach().numpy()))
            lines.extend(_format_matrix(layer.bias.detach().numpy().reshape(-1, 1)))
    lines.append(FOOTER)
    return "\n".join(lines) + "\n"


def save_checkpoint(nets: Dict[str, Mlp], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_checkpoint(nets), encoding="utf-8", newline="\n")
    logger.info(f"[checkpoint] saved {sorted(nets)} to {path}")
    return path


class _Reader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next_line(self) -> str:
        if self.pos >= len(self.lines):
            raise CheckpointFormatError("checkpoint ended unexpectedly")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def matrix(self) -> np.ndarray:
        try:
            rows, cols = (int(part) for part in self.next_line().split())
        except ValueError as e:
            raise CheckpointFormatError(f"bad matrix header at line {self.pos}: {e}") from e
        if rows <= 0 or cols <= 0:
            raise CheckpointFormatError(f"bad matrix shape {rows}x{cols} at line {self.pos}")
        data = []
        for _ in range(rows):
            line = self.next_line()
            try:
                row = [float(part) for part in line.split()]
            except ValueError as e:
                raise CheckpointFormatError(f"bad number at line {self.pos}: {e}") from e
            if len(row) != cols:
                raise CheckpointFormatError(f"line {self.pos}: expected {cols} values, got {len(row)}")
            data.append(row)
        matrix = np.array(data, dtype=float)
        if not np.all(np.isfinite(matrix)):
            raise CheckpointFormatError(f"non-finite parameter in block ending at line {self.pos}")
        return matrix


def loads_checkpoint(text: str) -> Dict[str, Mlp]:
    reader = _Reader(text)
    header = reader.next_line().strip()
    if header != HEADER:
        raise CheckpointFormatError(f"unsupported checkpoint header {header!r}, expected {HEADER!r}")
    nets: Dict[str, Mlp] = {}
    while True:
        line = reader.next_line().strip()
        if line == FOOTER:
            break
        parts = line.split()
        if len(parts) != 4 or parts[0] != "net" or parts[2] not in ("identity", "tanh"):
            raise CheckpointFormatError(f"bad network header {line!r}")
        name, activation = parts[1], parts[2]
        try:
            n_layers = int(parts[3])
        except ValueError as e:
            raise CheckpointFormatError(f"bad layer count in {line!r}") from e
        if n_layers < 1:
            raise CheckpointFormatError(f"network {name!r} has no layers")
        weights, biases = [], []
        for _ in range(n_layers):
            weights.append(reader.matrix())
            biases.append(reader.matrix())
        sizes = [weights[0].shape[1]] + [w.shape[0] for w in weights]
        for w, b, fan_in in zip(weights, biases, sizes[:-1]):
            if w.shape[1] != fan_in or b.shape != (w.shape[0], 1):
                raise CheckpointFormatError(f"incompatible layer shapes in network {name!r}")
        net = Mlp(sizes, activation)
        with torch.no_grad():
            for layer, w, b in zip(net.layers, weights, biases):
                layer.weight.copy_(torch.as_tensor(w, dtype=DTYPE))
                layer.bias.copy_(torch.as_tensor(b[:, 0], dtype=DTYPE))
        nets[name] = net
    if not nets:
        raise CheckpointFormatError("checkpoint contains no networks")
    return nets


def load_checkpoint(path: Path) -> Dict[str, Mlp]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise CheckpointFormatError(f"{path} is not a text checkpoint") from e
    nets = loads_checkpoint(text)
    logger.info(f"[checkpoint] loaded {sorted(nets)} from {path}")
    return nets
