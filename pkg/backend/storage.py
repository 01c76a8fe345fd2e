"""
Storage
On-disk formats of time lists, tables, posterior chains, audit logs and the run manifest
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd
from loguru import logger

import config
from backend.exceptions import FissidError
from backend.simulator import KIND_CODES, TimeList

MANIFEST_NAME = "manifest.json"
FLOAT_FORMAT = "%.17g"


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    return value


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _read_comments(path: Path) -> List[str]:
    lines = []
    with open(path) as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            lines.append(line[1:].strip())
    return lines


# --- Time lists ---------------------------------------------------------------

def write_timelist(t: TimeList, path: Path) -> Path:
    """
    Write a time list as TSV

    Header lines carry the duration, configuration hash, source-event count
    and tallies; rows are time_s, kind, history_id in time order.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as handle:
        handle.write(f"# duration={t.duration!r} config_hash={t.config_hash} n_histories={t.n_histories}\n")
        handle.write(f"# tallies={json.dumps(_to_jsonable(t.tallies), sort_keys=True)}\n")
        t.to_frame().to_csv(handle, sep="\t", index=False, float_format=FLOAT_FORMAT)
    logger.debug(f"Time list with {len(t)} events written to {path}")
    return path


def read_timelist(path: Path) -> TimeList:
    path = Path(path)
    try:
        header = _read_comments(path)
        fields = dict(item.split("=", 1) for item in header[0].split())
        tallies = json.loads(header[1].split("=", 1)[1]) if len(header) > 1 else {}
        frame = pd.read_csv(path, sep="\t", comment="#", float_precision="round_trip")
    except (OSError, IndexError, ValueError) as e:
        raise FissidError(f"Cannot read time list {path}: {e}") from e
    kinds = frame["kind"].map(KIND_CODES)
    if kinds.isna().any():
        raise FissidError(f"Unknown particle kind in {path}")
    return TimeList(
        duration=float(fields["duration"]),
        times=frame["time_s"].to_numpy(dtype=float),
        kinds=kinds.to_numpy(dtype=np.int8),
        histories=frame["history_id"].to_numpy(dtype=np.int64),
        n_histories=int(fields.get("n_histories", 0)),
        tallies=tallies,
        config_hash=fields.get("config_hash", ""),
    )


# --- Tables -------------------------------------------------------------------

def write_csv(frame: pd.DataFrame, path: Path, metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Write a table as CSV, optionally preceded by '# key=value' metadata lines"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as handle:
        for key, value in (metadata or {}).items():
            handle.write(f"# {key}={json.dumps(_to_jsonable(value))}\n")
        frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT)
    return path


def read_csv(path: Path):
    """
    Read a CSV written by write_csv

    Returns:
        Tuple (frame, metadata dict)
    """
    path = Path(path)
    metadata = {}
    for line in _read_comments(path):
        key, _, value = line.partition("=")
        metadata[key] = json.loads(value)
    frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    return frame, metadata


def write_posterior(samples, path: Path) -> Path:
    """Posterior chain CSV with provenance, acceptance rate and MAP in the header"""
    metadata = {
        **samples.provenance,
        "acceptance_rate": samples.acceptance_rate,
        "map_point": dict(zip(samples.names, samples.map_point.tolist())),
        "map_log_posterior": samples.map_log_posterior,
    }
    return write_csv(samples.to_frame(), path, metadata)


def read_posterior(path: Path):
    from backend.inference import PosteriorSamples

    frame, metadata = read_csv(path)
    names = tuple(c for c in frame.columns if c != "log_posterior")
    map_point = metadata.pop("map_point")
    acceptance = metadata.pop("acceptance_rate")
    map_value = metadata.pop("map_log_posterior")
    return PosteriorSamples(
        names=names,
        chain=frame[list(names)].to_numpy(),
        log_posterior=frame["log_posterior"].to_numpy(),
        acceptance_rate=float(acceptance),
        map_point=np.array([map_point[name] for name in names]),
        map_log_posterior=float(map_value),
        provenance=metadata,
    )


# --- JSON ---------------------------------------------------------------------

def write_json(payload: Dict[str, Any], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_to_jsonable(payload), indent=2, sort_keys=True))
    return path


def read_json(path: Path) -> Dict[str, Any]:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise FissidError(f"Cannot read JSON file {path}: {e}") from e


def append_jsonl(record: Dict[str, Any], path: Path) -> Path:
    """Append one record to a JSON-lines file"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as handle:
        handle.write(json.dumps(_to_jsonable(record), sort_keys=True) + "\n")
    return path


def read_jsonl(path: Path) -> List[Dict[str, Any]]:
    with open(path) as handle:
        return [json.loads(line) for line in handle if line.strip()]


# --- Run manifest -------------------------------------------------------------

def config_hash(payload: Dict[str, Any]) -> str:
    return hashlib.sha256(json.dumps(_to_jsonable(payload), sort_keys=True).encode()).hexdigest()


def update_manifest(output_dir: Path, stage: str, artifacts: Iterable[Path], master_seed: int,
                    stage_seeds: Optional[Dict[str, int]] = None,
                    experiment_hash: str = "") -> Path:
    """
    Record the artefacts of one stage in the run manifest

    Each artefact is listed relative to output_dir with its sha256; a
    stage re-run replaces its previous entry.

    Args:
        output_dir: Run directory holding manifest.json
        stage: Subcommand name
        artifacts: Files written by the stage
        master_seed: Master seed of the run
        stage_seeds: Seeds derived for the stage
        experiment_hash: Hash of the experiment configuration

    Returns:
        Path of the manifest
    """
    output_dir = Path(output_dir)
    path = output_dir / MANIFEST_NAME
    manifest = read_json(path) if path.exists() else {"stages": {}}
    manifest.update({
        "code_version": config.CODE_VERSION,
        "config_hash": experiment_hash,
        "master_seed": int(master_seed),
    })
    manifest["stages"][stage] = {
        "seeds": stage_seeds or {},
        "artifacts": {
            str(Path(a).resolve().relative_to(output_dir.resolve())): file_sha256(Path(a)) for a in artifacts
        },
    }
    logger.info(f"Manifest updated for stage {stage} ({len(manifest['stages'][stage]['artifacts'])} files)")
    return write_json(manifest, path)


def verify_manifest(output_dir: Path) -> List[str]:
    """Artefacts missing or modified since they were recorded"""
    output_dir = Path(output_dir)
    manifest = read_json(output_dir / MANIFEST_NAME)
    stale = []
    for entry in manifest.get("stages", {}).values():
        for name, digest in entry["artifacts"].items():
            target = output_dir / name
            if not target.exists() or file_sha256(target) != digest:
                stale.append(name)
    return stale

