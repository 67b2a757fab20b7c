#!/usr/bin/env python3
"""
Utility functions shared by the simulator, the agent and the experiment runner
"""

import json
import logging
import math
import sys
from pathlib import Path

from .errors import ConfigurationError, InvalidArgumentError

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def setup_logging(level=logging.INFO, log_file=None):
    """Root logger ayarları: stderr + opsiyonel log dosyası"""
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)


def require_positive(name, value):
    """value > 0 olmalı"""
    if not isinstance(value, (int, float)) or math.isnan(value) or value <= 0:
        raise InvalidArgumentError(f"{name} must be positive, got {value!r}")
    return value


def require_nonnegative(name, value):
    """value >= 0 olmalı"""
    if not isinstance(value, (int, float)) or math.isnan(value) or value < 0:
        raise InvalidArgumentError(f"{name} must be non-negative, got {value!r}")
    return value


def load_json_document(path):
    """JSON dosyasını okur; dosya yoksa FileNotFoundError yükselir"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON ({e})") from e


def write_json_document(path, document):
    """Deterministic JSON output (fixed key order, trailing newline)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(document, f, indent=2, ensure_ascii=False, allow_nan=True)
        f.write('\n')
    return path


def check_fields(document, required, optional=(), what='document'):
    """Zorunlu alanlar var mı, bilinmeyen alan var mı kontrol eder"""
    if not isinstance(document, dict):
        raise ConfigurationError(f"{what} must be a JSON object, got {type(document).__name__}")
    unknown = sorted(set(document) - set(required) - set(optional))
    if unknown:
        raise ConfigurationError(f"{what}: unknown field(s) {', '.join(unknown)}")
    missing = [key for key in required if key not in document]
    if missing:
        raise ConfigurationError(f"{what}: missing field(s) {', '.join(missing)}")


def parse_seed_list(seeds_str):
    """'1,2,3' -> [1, 2, 3]"""
    if isinstance(seeds_str, (list, tuple)):
        return [int(s) for s in seeds_str]
    seeds = []
    for part in str(seeds_str).split(','):
        part = part.strip()
        if not part:
            continue
        try:
            seeds.append(int(part))
        except ValueError:
            raise ConfigurationError(f"Invalid seed: {part!r}")
    return seeds


def parse_name_list(names_str):
    """'random, k8-default' -> ['random', 'k8-default']"""
    return [name.strip() for name in str(names_str).split(',') if name.strip()]
