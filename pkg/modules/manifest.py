"""
RunManifest: configuração resolvida de cada comando, gravada em JSON ao
lado das saídas. `--from-manifest` reexecuta o comando a partir de `argv`.
"""
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np
from dateutil import parser as date_parser
from dateutil import tz

from modules import __version__
from utils.exceptions import ParseError

logger = logging.getLogger(__name__)

SCHEMA = "qan-manifest v1"
FORMAT_VERSIONS = {"qanset": "QANSET v1", "qanmodel": "QANMODEL v1"}


def agora():
    """Instante atual com fuso horário local"""
    return datetime.now(tz.tzlocal())


def _config_dict(value):
    if dataclasses.is_dataclass(value):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(value).items()}
    return value


@dataclass
class RunManifest:
    command: str
    argv: list
    seed: int = None
    configs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    metrics: list = field(default_factory=list)
    versions: dict = field(default_factory=dict)
    started_at: datetime = field(default_factory=agora)
    finished_at: datetime = None
    status: str = "running"

    def __post_init__(self):
        if not self.versions:
            self.versions = {"qan": __version__, "numpy": np.__version__, **FORMAT_VERSIONS}

    def add_config(self, nome, config):
        self.configs[nome] = _config_dict(config)

    def add_output(self, path):
        if path not in self.outputs:
            self.outputs.append(path)

    def finish(self, status="ok"):
        self.status = status
        self.finished_at = agora()

    def to_dict(self):
        return {
            "schema": SCHEMA,
            "command": self.command,
            "argv": list(self.argv),
            "seed": self.seed,
            "configs": self.configs,
            "outputs": self.outputs,
            "metrics": [list(m) for m in self.metrics],
            "versions": self.versions,
            "started_at": self.started_at.isoformat(),
            "finished_at": self.finished_at.isoformat() if self.finished_at else None,
            "status": self.status,
        }

    @property
    def duration(self):
        if self.finished_at is None:
            return None
        return (self.finished_at - self.started_at).total_seconds()


def save_manifest(manifest, path):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest.to_dict(), f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    logger.debug("Manifesto gravado em %s", path)
    return path


def load_manifest(path):
    """Lê um manifesto JSON; ParseError se o esquema não for reconhecido"""
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"JSON inválido: {e.msg}", e.lineno, path) from None
    if not isinstance(data, dict) or data.get("schema") != SCHEMA:
        raise ParseError(f"esquema de manifesto desconhecido, esperado '{SCHEMA}'", None, path)
    for chave in ("command", "argv"):
        if chave not in data:
            raise ParseError(f"campo '{chave}' ausente", None, path)
    return RunManifest(
        command=data["command"],
        argv=list(data["argv"]),
        seed=data.get("seed"),
        configs=data.get("configs", {}),
        outputs=data.get("outputs", []),
        metrics=[tuple(m) for m in data.get("metrics", [])],
        versions=data.get("versions", {}),
        started_at=date_parser.isoparse(data["started_at"]) if data.get("started_at") else agora(),
        finished_at=date_parser.isoparse(data["finished_at"]) if data.get("finished_at") else None,
        status=data.get("status", "running"),
    )
