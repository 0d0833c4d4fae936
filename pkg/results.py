"""
Result Store Module

Append-only persistence of a scenario run under one output directory:
  records.jsonl    one JSON record per stage run (ok or failed), tagged with its run id
  tables/*.csv     tables written by the stages, read back by later stages and plots
  plots/*.svg      rendered figures
  manifest.json    config hash, seed and the files present
Nothing time-dependent is written, so the same config and seed reproduce the
same bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from report import plain

logger = logging.getLogger(__name__)

RECORDS = "records.jsonl"
MANIFEST = "manifest.json"


class ResultError(KeyError):
    """Raised when a stage asks for a record or table that was never written."""


def canonical_json(data: Any) -> str:
    return json.dumps(plain(data), sort_keys=True, separators=(",", ":"))


def config_hash(config: Dict[str, Any]) -> str:
    """SHA-256 of the sorted-key JSON dump of a config block."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def _parse_cell(text: str) -> Any:
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        return text


class ResultStore:
    def __init__(self, root: Union[str, Path], run_id: Optional[str] = None):
        self.root = Path(root)
        self.run_id = run_id or self.root.name
        self.root.mkdir(parents=True, exist_ok=True)

    @property
    def tables_dir(self) -> Path:
        return self.root / "tables"

    @property
    def plots_dir(self) -> Path:
        return self.root / "plots"

    # ---------- records ----------

    def save_record(self, stage: str, data: Dict[str, Any], status: str = "ok",
                    error: Optional[str] = None) -> Dict[str, Any]:
        """Append one stage record to records.jsonl."""
        record = {"run_id": self.run_id, "stage": stage, "status": status, "data": plain(data)}
        if error is not None:
            record["error"] = error
        with open(self.root / RECORDS, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")
        logger.info(f"[Saved] {stage} record ({status}) with {len(data)} fields")
        return record

    def records(self, run_id: Optional[str] = None) -> List[Dict[str, Any]]:
        """Every stored record, or only those of one run."""
        path = self.root / RECORDS
        if not path.exists():
            return []
        with open(path, encoding="utf-8") as f:
            records = [json.loads(line) for line in f if line.strip()]
        if run_id is not None:
            records = [r for r in records if r.get("run_id") == run_id]
        return records

    def run_ids(self) -> List[str]:
        """Run ids in the order they first appear in records.jsonl."""
        seen: List[str] = []
        for record in self.records():
            if record.get("run_id") not in seen:
                seen.append(record.get("run_id"))
        return seen

    def begin_run(self, config: Dict[str, Any]) -> str:
        """Start a new run: config hash prefix plus its sequence number in this store."""
        self.run_id = f"{config_hash(config)[:12]}-{len(self.run_ids()) + 1}"
        logger.info(f"[Run] {self.root}: run {self.run_id}")
        return self.run_id

    def latest(self, stage: str) -> Optional[Dict[str, Any]]:
        """Data of the last successful record of `stage`, or None."""
        found = None
        for record in self.records():
            if record["stage"] == stage and record["status"] == "ok":
                found = record["data"]
        return found

    def require(self, stage: str) -> Dict[str, Any]:
        data = self.latest(stage)
        if data is None:
            raise ResultError(f"no '{stage}' record in {self.root}; run that stage first")
        return data

    # ---------- tables ----------

    def write_table(self, name: str, rows: Sequence[Dict[str, Any]],
                    columns: Optional[Sequence[str]] = None) -> Path:
        if columns is None:
            columns = []
            for row in rows:
                columns.extend(k for k in row if k not in columns)
        self.tables_dir.mkdir(parents=True, exist_ok=True)
        path = self.tables_dir / f"{name}.csv"
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(columns), extrasaction="ignore",
                                    lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: plain(v) for k, v in row.items()})
        logger.info(f"[Saved] table {name} ({len(rows)} rows)")
        return path

    def has_table(self, name: str) -> bool:
        return (self.tables_dir / f"{name}.csv").exists()

    def read_table(self, name: str) -> List[Dict[str, Any]]:
        """Rows with numeric cells parsed to float and empty cells to None."""
        path = self.tables_dir / f"{name}.csv"
        if not path.exists():
            raise ResultError(f"no table '{name}' in {self.root}")
        with open(path, encoding="utf-8", newline="") as f:
            return [{k: _parse_cell(v) for k, v in row.items()} for row in csv.DictReader(f)]

    def tables(self) -> List[str]:
        if not self.tables_dir.exists():
            return []
        return sorted(p.stem for p in self.tables_dir.glob("*.csv"))

    # ---------- files ----------

    def svg_path(self, name: str) -> Path:
        self.plots_dir.mkdir(parents=True, exist_ok=True)
        return self.plots_dir / f"{name}.svg"

    def write_text(self, name: str, text: str) -> Path:
        path = self.root / name
        path.write_text(text, encoding="utf-8")
        logger.info(f"[Saved] {name}")
        return path

    def files(self) -> List[str]:
        return sorted(
            str(p.relative_to(self.root)) for p in self.root.rglob("*")
            if p.is_file() and p.name != MANIFEST
        )

    # ---------- manifest ----------

    def write_manifest(self, config: Dict[str, Any], seed: Optional[int] = None,
                       extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        manifest = {
            "run_id": self.run_id,
            "config_sha256": config_hash(config),
            "seed": seed,
            "tables": self.tables(),
            "files": self.files(),
        }
        manifest.update(extra or {})
        with open(self.root / MANIFEST, "w", encoding="utf-8") as f:
            json.dump(plain(manifest), f, indent=2, sort_keys=True)
            f.write("\n")
        logger.info(f"[Saved] manifest ({len(manifest['files'])} files)")
        return manifest

    def manifest(self) -> Dict[str, Any]:
        path = self.root / MANIFEST
        if not path.exists():
            raise ResultError(f"no manifest in {self.root}")
        with open(path, encoding="utf-8") as f:
            return json.load(f)

    def verify_manifest(self, config: Dict[str, Any]) -> bool:
        return self.manifest()["config_sha256"] == config_hash(config)


def rows_from_columns(**columns: Iterable[Any]) -> List[Dict[str, Any]]:
    """Zip equally long columns into table rows."""
    names = list(columns)
    return [dict(zip(names, values)) for values in zip(*columns.values())]
