import json
import logging
import os
import platform
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

import pandas as pd
from config import config
from core import TIE_BREAK
from experiment import ExperimentOutcome
from presets import config_hash, dump_config
from tabulate import tabulate

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
EXPANDED_CONFIG = "config.yaml"


def write_table(frame: pd.DataFrame, path: str) -> None:
    """RFC-4180 CSV at full double precision; named indexes become a column"""
    frame.to_csv(path, index=frame.index.name is not None, lineterminator="\n")


def write_trace(records, path: str) -> int:
    """One JSON object per line; returns the number of records written"""
    count = 0
    with open(path, "w", encoding="utf-8") as file:
        for record in records:
            file.write(json.dumps(record) + "\n")
            count += 1
    return count


def write_json(document: Any, path: str) -> None:
    with open(path, "w", encoding="utf-8") as file:
        json.dump(document, file, indent=2)
        file.write("\n")


def build_manifest(
    outcome: ExperimentOutcome, files: List[str], threads: Optional[int] = None
) -> Dict[str, Any]:
    """Provenance record; the embedded config regenerates every output"""
    run_config = outcome.run_config
    simulation = run_config.simulation
    seed = None
    if simulation is not None:
        seed = config.DEFAULT_SEED if simulation.seed is None else simulation.seed
    return {
        "name": run_config.name,
        "experiment": run_config.experiment,
        "master_seed": seed,
        "tie_break": TIE_BREAK,
        "version": config.VERSION,
        "config_sha256": config_hash(run_config),
        "config": run_config.model_dump(mode="json"),
        "wall_time_seconds": outcome.wall_time,
        "threads": threads,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "files": files,
    }


def write_outcome(
    outcome: ExperimentOutcome, out_dir: str, threads: Optional[int] = None
) -> List[str]:
    """
    Write every artifact of a run into out_dir.

    Args:
        outcome: Result of ExperimentRunner.run()
        out_dir: Target directory, created if missing
        threads: Worker count, recorded in the manifest

    Returns:
        Paths of the written files, manifest last
    """
    os.makedirs(out_dir, exist_ok=True)
    output = outcome.run_config.output
    written = []

    path = os.path.join(out_dir, EXPANDED_CONFIG)
    with open(path, "w", encoding="utf-8") as file:
        file.write(dump_config(outcome.run_config))
    written.append(path)

    if "csv" in output.formats:
        for name, frame in outcome.tables.items():
            path = os.path.join(out_dir, f"{name}.csv")
            write_table(frame, path)
            written.append(path)

    if "jsonl" in output.formats:
        for name, trace in outcome.traces.items():
            path = os.path.join(out_dir, f"{name}.jsonl")
            count = write_trace(trace.records(output.stride), path)
            logger.debug("Wrote %d trace records to %s", count, path)
            written.append(path)

    if "json" in output.formats:
        for name, document in outcome.documents.items():
            path = os.path.join(out_dir, f"{name}.json")
            write_json(document, path)
            written.append(path)

    path = os.path.join(out_dir, MANIFEST)
    files = [os.path.basename(p) for p in written]
    write_json(build_manifest(outcome, files, threads), path)
    written.append(path)

    logger.info("Wrote %d files to %s", len(written), out_dir)
    return written


def format_summaries(outcome: ExperimentOutcome, decimals: Optional[int] = None) -> str:
    """Console tables rounded to the display precision"""
    if decimals is None:
        decimals = outcome.run_config.output.decimals
    if decimals is None:
        decimals = config.DISPLAY_DECIMALS
    blocks = []
    for title, frame in outcome.summaries:
        if frame is None or frame.empty:
            continue
        show_index = frame.index.name is not None
        table = tabulate(
            frame,
            headers="keys",
            tablefmt="simple",
            floatfmt=f".{decimals}f",
            showindex=show_index,
        )
        blocks.append(f"{title}\n{table}")
    return "\n\n".join(blocks)
