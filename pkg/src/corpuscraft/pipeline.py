"""Declarative multi-stage corpus runs with a reproducibility manifest.

A run is a YAML config naming stages in order; every stage is one registered
operation with validated parameters. The manifest records counts, drop
reasons, output hashes, and a hash chain, so a finished run can be checked
for tampering and replayed bit-for-bit from the same seed.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import yaml

from . import dedup as dedup_mod
from . import webrules
from .cleanup import clean_stream
from .pii import redact_pii
from .records import (RecordParseError, read_records, validate_record,
                      write_decisions, write_records)
from .webselect import (SnapshotRobotsProvider, blacklist_filter,
                        load_blacklist, optout_filter, overlap_filter,
                        write_verdicts)

CONFIG_VERSION = 1
MODES = ("strict", "skip")


class ConfigError(ValueError):
    """The config is malformed; nothing has been read or written yet."""


def derive_seed(master, label: str) -> int:
    """Stage- or record-level seed from the single run seed."""
    digest = hashlib.sha256(("%s:%s" % (master, label)).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass(frozen=True)
class StageConfig:
    name: str
    operation: str
    input: str
    output: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PipelineConfig:
    version: int
    seed: int
    mode: str
    manifest: str
    stages: tuple


# Parameter schemas: name -> (type, required). Unknown parameter names are
# config errors, silent misconfiguration being worse than a hard stop.
_PARAM_SCHEMAS = {
    "validate": {"report": (str, False)},
    "cleanup": {"report": (str, False)},
    "filter": {"rule": (str, True), "report": (str, False),
               "badwords": (list, False)},
    "pii": {},
    "dedup": {"shingle_k": (int, False), "num_perm": (int, False),
              "bands": (int, False), "rows": (int, False),
              "threshold": (float, False), "report": (str, False),
              "partition": (str, False)},
    "webselect": {"blacklist": (str, False), "robots_snapshot": (str, False),
                  "agent": (str, False), "report": (str, False)},
}

FILTER_RULES = ("gopher", "repetition", "c4")

# How dedup groups documents before comparing them. Crawl corpora carry a
# snapshot extra field; curated corpora usually group by source instead.
DEDUP_PARTITIONS = ("snapshot", "source", "global")


def _check_params(operation: str, params: dict) -> None:
    schema = _PARAM_SCHEMAS[operation]
    for key, value in params.items():
        if key not in schema:
            raise ConfigError("stage operation %r does not accept "
                              "parameter %r" % (operation, key))
        expected, _ = schema[key]
        if expected is float and isinstance(value, int):
            value = float(value)
        if not isinstance(value, expected):
            raise ConfigError("parameter %r of %r must be %s"
                              % (key, operation, expected.__name__))
    for key, (_, required) in schema.items():
        if required and key not in params:
            raise ConfigError("operation %r requires parameter %r"
                              % (operation, key))
    if operation == "filter" and params.get("rule") not in FILTER_RULES:
        raise ConfigError("filter rule must be one of %s"
                          % (FILTER_RULES,))
    if (operation == "dedup" and "partition" in params
            and params["partition"] not in DEDUP_PARTITIONS):
        raise ConfigError("dedup partition must be one of %s"
                          % (DEDUP_PARTITIONS,))


def _require_keys(obj: dict, allowed: dict, where: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ConfigError("unknown key %r in %s" % (key, where))
    for key, required in allowed.items():
        if required and key not in obj:
            raise ConfigError("missing key %r in %s" % (key, where))


def parse_config(obj: dict) -> PipelineConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a mapping")
    _require_keys(obj, {"version": True, "seed": False, "mode": False,
                        "manifest": True, "stages": True}, "config")
    if obj["version"] != CONFIG_VERSION:
        raise ConfigError("unsupported config version %r" % (obj["version"],))
    seed = obj.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    mode = obj.get("mode", "strict")
    if mode not in MODES:
        raise ConfigError("mode must be one of %s" % (MODES,))
    if not isinstance(obj["manifest"], str) or not obj["manifest"]:
        raise ConfigError("manifest must be a non-empty path")
    raw_stages = obj["stages"]
    if not isinstance(raw_stages, list) or not raw_stages:
        raise ConfigError("stages must be a non-empty list")
    stages = []
    names = set()
    for i, raw in enumerate(raw_stages):
        where = "stage %d" % i
        if not isinstance(raw, dict):
            raise ConfigError("%s must be a mapping" % where)
        _require_keys(raw, {"name": True, "operation": True, "input": True,
                            "output": True, "params": False}, where)
        name = raw["name"]
        if not isinstance(name, str) or not name:
            raise ConfigError("%s has an invalid name" % where)
        if name in names:
            raise ConfigError("duplicate stage name %r" % name)
        names.add(name)
        operation = raw["operation"]
        if operation not in _PARAM_SCHEMAS:
            raise ConfigError("unknown operation %r in stage %r"
                              % (operation, name))
        for key in ("input", "output"):
            if not isinstance(raw[key], str) or not raw[key]:
                raise ConfigError("stage %r needs a non-empty %r path"
                                  % (name, key))
        params = raw.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("params of stage %r must be a mapping" % name)
        _check_params(operation, params)
        stages.append(StageConfig(name, operation, raw["input"],
                                  raw["output"], dict(params)))
    return PipelineConfig(CONFIG_VERSION, seed, mode, obj["manifest"],
                          tuple(stages))


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError("config is not valid YAML: %s" % exc)
    return parse_config(obj)


def _read_docs(path, mode: str):
    """(records, parse error count); strict mode raises instead of counting."""
    errors = []
    docs = list(read_records(path, mode=mode,
                             errors=errors if mode == "skip" else None))
    return docs, len(errors)


def _count_drops(pairs) -> dict:
    counts = {}
    for _, decision in pairs:
        counts[decision.rule_id] = counts.get(decision.rule_id, 0) + 1
    return counts


def op_validate(input_path, output_path,
                report: Optional[str] = None) -> tuple:
    """Schema-check a record stream; parse failures count as drops.

    Always reads leniently: catching bad lines is this stage's job, so a
    malformed record is a counted drop, not a stage failure.
    """
    errors = []
    docs = list(read_records(input_path, mode="skip", errors=errors))
    kept = []
    dropped_pairs = []
    for doc in docs:
        decision = validate_record(doc)
        if decision.keep:
            kept.append(doc)
        else:
            dropped_pairs.append((doc, decision))
    write_records(kept, output_path, mode="skip")
    if report is not None:
        write_decisions(dropped_pairs, report)
    dropped = _count_drops(dropped_pairs)
    if errors:
        dropped["parse"] = len(errors)
    return len(docs) + len(errors), len(kept), dropped


def op_cleanup(input_path, output_path, mode: str = "strict",
               report: Optional[str] = None) -> tuple:
    docs, parse_errors = _read_docs(input_path, mode)
    kept, dropped_pairs = clean_stream(docs)
    write_records(kept, output_path, mode="skip")
    if report is not None:
        write_decisions(dropped_pairs, report)
    dropped = _count_drops(dropped_pairs)
    if parse_errors:
        dropped["parse"] = parse_errors
    return len(docs) + parse_errors, len(kept), dropped


def op_filter(input_path, output_path, rule: str, mode: str = "strict",
              badwords=(), report: Optional[str] = None) -> tuple:
    if rule not in FILTER_RULES:
        raise ValueError("unknown filter rule %r" % rule)
    docs, parse_errors = _read_docs(input_path, mode)
    kept = []
    dropped_pairs = []
    for doc in docs:
        if rule == "gopher":
            result, decision = doc, webrules.gopher_rules(doc)
        elif rule == "repetition":
            result, decision = doc, webrules.repetition_filter(doc)
        else:
            result, decision = webrules.c4_apply(doc, tuple(badwords))
        if decision.keep:
            kept.append(result)
        else:
            dropped_pairs.append((doc, decision))
    write_records(kept, output_path, mode="skip")
    if report is not None:
        write_decisions(dropped_pairs, report)
    dropped = _count_drops(dropped_pairs)
    if parse_errors:
        dropped["parse"] = parse_errors
    return len(docs) + parse_errors, len(kept), dropped


def op_pii(input_path, output_path, seed: int,
           mode: str = "strict") -> tuple:
    docs, parse_errors = _read_docs(input_path, mode)
    out = [redact_pii(doc, seed=seed) for doc in docs]
    write_records(out, output_path, mode="skip")
    dropped = {"parse": parse_errors} if parse_errors else {}
    return len(docs) + parse_errors, len(out), dropped


def op_dedup(input_path, output_path, seed: int, mode: str = "strict",
             shingle_k: Optional[int] = None, num_perm: Optional[int] = None,
             bands: Optional[int] = None, rows: Optional[int] = None,
             threshold: Optional[float] = None,
             report: Optional[str] = None,
             partition: Optional[str] = None) -> tuple:
    docs, parse_errors = _read_docs(input_path, mode)
    kwargs = {"seed": seed}
    if partition == "source":
        kwargs["partition_fn"] = lambda doc: (doc.source,
                                              doc.language.serialize())
    elif partition == "global":
        kwargs["partition_fn"] = lambda doc: ()
    elif partition not in (None, "snapshot"):
        raise ValueError("dedup partition must be one of %s"
                         % (DEDUP_PARTITIONS,))
    if shingle_k is not None:
        kwargs["k"] = shingle_k
    if num_perm is not None:
        kwargs["num_perm"] = num_perm
    if bands is not None:
        kwargs["bands"] = bands
    if rows is not None:
        kwargs["rows"] = rows
    if threshold is not None:
        kwargs["threshold"] = threshold
    kept, drop_report = dedup_mod.dedup_partition(docs, **kwargs)
    write_records(kept, output_path, mode="skip")
    if report is not None:
        dedup_mod.write_drop_report(drop_report, report)
    dropped = {"duplicate": len(drop_report)} if drop_report else {}
    if parse_errors:
        dropped["parse"] = parse_errors
    return len(docs) + parse_errors, len(kept), dropped


def op_webselect(input_path, output_path,
                 blacklist: Optional[str] = None,
                 robots_snapshot: Optional[str] = None,
                 agent: Optional[str] = None,
                 report: Optional[str] = None) -> tuple:
    """URL list in, kept URLs out; offline by construction (snapshot dir)."""
    with open(input_path, "r", encoding="utf-8") as fh:
        urls = [line.strip() for line in fh if line.strip()]
    black = load_blacklist(blacklist) if blacklist else frozenset()
    robots = (SnapshotRobotsProvider(robots_snapshot)
              if robots_snapshot else None)
    verdicts = []
    for url in urls:
        verdict = overlap_filter(url)
        if verdict.keep:
            verdict = blacklist_filter(url, black)
        if verdict.keep and robots is not None:
            verdict = optout_filter(url, robots,
                                    agent=agent if agent else "CCBot")
        verdicts.append(verdict)
    kept = [v.url for v in verdicts if v.keep]
    with open(output_path, "w", encoding="utf-8") as fh:
        for url in kept:
            fh.write(url + "\n")
    if report is not None:
        write_verdicts(verdicts, report)
    dropped = {}
    for v in verdicts:
        if not v.keep:
            key = v.rule or v.verdict
            dropped[key] = dropped.get(key, 0) + 1
    return len(urls), len(kept), dropped


def _run_stage(stage: StageConfig, config: PipelineConfig) -> tuple:
    seed = derive_seed(config.seed, stage.name)
    params = stage.params
    if stage.operation == "validate":
        return op_validate(stage.input, stage.output, params.get("report"))
    if stage.operation == "cleanup":
        return op_cleanup(stage.input, stage.output, config.mode,
                          params.get("report"))
    if stage.operation == "filter":
        return op_filter(stage.input, stage.output, params["rule"],
                         config.mode, params.get("badwords", ()),
                         params.get("report"))
    if stage.operation == "pii":
        return op_pii(stage.input, stage.output, seed, config.mode)
    if stage.operation == "dedup":
        return op_dedup(stage.input, stage.output, seed, config.mode,
                        params.get("shingle_k"), params.get("num_perm"),
                        params.get("bands"), params.get("rows"),
                        params.get("threshold"), params.get("report"),
                        params.get("partition"))
    if stage.operation == "webselect":
        return op_webselect(stage.input, stage.output,
                            params.get("blacklist"),
                            params.get("robots_snapshot"),
                            params.get("agent"), params.get("report"))
    raise ValueError("unregistered operation %r" % stage.operation)


@dataclass(frozen=True)
class RunResult:
    exit_code: int
    manifest_path: str
    manifest: dict


def run(config_path, seed: Optional[int] = None,
        mode: Optional[str] = None) -> RunResult:
    """Execute a config; always writes the manifest, even on failure.

    Exit code is nonzero only for strict-mode stage failures; skip mode
    records failures in the manifest and keeps going.
    """
    raw = Path(config_path).read_bytes()
    config = load_config(config_path)
    if seed is not None:
        config = PipelineConfig(config.version, seed, config.mode,
                                config.manifest, config.stages)
    if mode is not None:
        if mode not in MODES:
            raise ConfigError("mode must be one of %s" % (MODES,))
        config = PipelineConfig(config.version, config.seed, mode,
                                config.manifest, config.stages)

    config_hash = hashlib.sha256(raw).hexdigest()
    chain = config_hash
    entries = []
    failed = False
    for stage in config.stages:
        if failed and config.mode == "strict":
            break
        entry = {"name": stage.name, "operation": stage.operation,
                 "input": stage.input, "output": stage.output}
        try:
            n_in, n_out, dropped = _run_stage(stage, config)
        except Exception as exc:
            entry.update({"status": "failed", "error": str(exc),
                          "input_count": None, "output_count": None,
                          "dropped": {}, "output_sha256": None,
                          "chain": None})
            failed = True
        else:
            output_hash = _sha256_file(stage.output)
            chain = hashlib.sha256((chain + output_hash).encode()).hexdigest()
            entry.update({"status": "ok", "input_count": n_in,
                          "output_count": n_out, "dropped": dropped,
                          "output_sha256": output_hash, "chain": chain})
        entries.append(entry)

    manifest = {"format_version": 1,
                "config_path": str(config_path),
                "config_sha256": config_hash,
                "seed": config.seed,
                "mode": config.mode,
                "stages": entries,
                "chain": chain,
                "status": "failed" if failed else "ok"}
    with open(config.manifest, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    exit_code = 1 if (failed and config.mode == "strict") else 0
    return RunResult(exit_code, config.manifest, manifest)


def conservation_holds(entry: dict) -> bool:
    """input = output + dropped for one successful manifest entry."""
    if entry["status"] != "ok":
        return True
    total_dropped = sum(entry["dropped"].values())
    return entry["input_count"] == entry["output_count"] + total_dropped


def verify_run(manifest_path) -> list:
    """Recheck output hashes and the chain; returns a list of problems."""
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    problems = []
    chain = manifest["config_sha256"]
    config_path = Path(manifest["config_path"])
    if config_path.is_file():
        actual = hashlib.sha256(config_path.read_bytes()).hexdigest()
        if actual != manifest["config_sha256"]:
            problems.append("config file %s was modified" % config_path)
    for entry in manifest["stages"]:
        if entry["status"] != "ok":
            continue
        if not conservation_holds(entry):
            problems.append("stage %r breaks count conservation"
                            % entry["name"])
        output = Path(entry["output"])
        if not output.is_file():
            problems.append("output %s of stage %r is missing"
                            % (output, entry["name"]))
            continue
        actual = _sha256_file(output)
        if actual != entry["output_sha256"]:
            problems.append("output %s of stage %r was modified"
                            % (output, entry["name"]))
        chain = hashlib.sha256((chain + actual).encode()).hexdigest()
        if chain != entry["chain"]:
            problems.append("hash chain breaks at stage %r" % entry["name"])
    if not problems and chain != manifest["chain"]:
        problems.append("final chain value does not match")
    return problems
