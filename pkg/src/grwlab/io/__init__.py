"""Configuration loading and persistence."""
from .config import FORMAT_VERSION, ConfigError, RunConfig, load_config, parse_config, validate
from .serialize import (decode_array, encode_array, povm_from_dict, povm_to_dict, read_jsonl, read_povm,
                        read_report, trajectory_record, write_csv, write_json, write_jsonl, write_povm,
                        write_report)

__all__ = [name for name in dir() if not name.startswith("_")]
