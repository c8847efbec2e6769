"""INI config file + command-line overrides -> one resolved configuration.

Precedence, lowest first: built-in defaults, the per-decoder defaults
(layers / residual / graph norm), the ``--config`` file, explicit flags.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from . import __version__
from .model import DECODER_DEFAULTS

DEFAULTS = {
    "paths": {"corpus": "", "dataset": "", "checkpoint": "", "out": ""},
    "preprocess": {"target_cap": 5000, "attr_cap": 10000, "depth_cap": 20, "max_len": 5, "split_seed": 0},
    "model": {
        "decoder": "linear",
        "layers": None,
        "hidden_dim": 300,
        "residual": None,
        "graphnorm": None,
        "dropout": 0.1,
        "readout": "mlap",
        "teacher_forcing": False,
    },
    "train": {
        "epochs": 50,
        "batch_size": 256,
        "lr": 5e-4,
        "decay_factor": 0.2,
        "patience": 3,
        "min_lr": 1e-6,
        "seeds": "0",
    },
}

_BOOL = {"on": True, "off": False, "true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def parse_bool(value):
    if isinstance(value, bool):
        return value
    try:
        return _BOOL[str(value).strip().lower()]
    except KeyError:
        raise ValueError(f"expected on/off, got {value!r}") from None


def parse_seeds(value):
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    return [int(v) for v in str(value).replace(" ", "").split(",") if v]


def _coerce(section, key, raw):
    default = DEFAULTS[section].get(key)
    if key in ("residual", "graphnorm", "teacher_forcing"):
        return parse_bool(raw)
    if key == "seeds":
        return ",".join(str(s) for s in parse_seeds(raw))
    if key == "layers" or isinstance(default, bool):
        return int(raw) if key == "layers" else parse_bool(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return str(raw)


def resolve(config_file=None, overrides=None):
    """Merge defaults, file values and ``overrides`` (``{section: {key: value}}``, None = unset)."""
    cfg = {s: dict(v) for s, v in DEFAULTS.items()}
    if config_file:
        parser = configparser.ConfigParser()
        if not parser.read(config_file):
            raise FileNotFoundError(f"config file not found: {config_file}")
        for section in parser.sections():
            if section not in cfg:
                raise ValueError(f"{config_file}: unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in cfg[section]:
                    raise ValueError(f"{config_file}: unknown key {key!r} in [{section}]")
                cfg[section][key] = _coerce(section, key, raw)
    for section, values in (overrides or {}).items():
        for key, value in values.items():
            if value is not None:
                cfg[section][key] = _coerce(section, key, value)

    model = cfg["model"]
    preset = DECODER_DEFAULTS.get(model["decoder"])
    if preset is None:
        raise ValueError(f"unknown decoder kind {model['decoder']!r} (expected linear or lstm)")
    if model["layers"] is None:
        model["layers"] = preset["num_layers"]
    if model["residual"] is None:
        model["residual"] = preset["residual"]
    if model["graphnorm"] is None:
        model["graphnorm"] = preset["graph_norm"]
    return cfg


def write_resolved(cfg, directory):
    """Echo the resolved configuration (plus tool version) into ``directory``."""
    parser = configparser.ConfigParser()
    parser["meta"] = {"tool_version": __version__}
    for section, values in cfg.items():
        parser[section] = {k: _format(v) for k, v in values.items()}
    path = Path(directory) / "resolved_config.ini"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        parser.write(fh)
    return path


def _format(v):
    if isinstance(v, bool):
        return "on" if v else "off"
    return str(v)
