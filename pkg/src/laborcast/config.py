"""Run configuration: named profiles overlaid by an INI-style file.

Keys in ``[model]`` and ``[training]`` reuse the hyperparameter names of the
original training script (``cnn_kernel_size``, ``rnn_hidden_size``,
``skip_size``, ...). A python-dict listing such as::

    MODEL_CONFIG = {
        'cnn_kernel_size': 6,
        'skip_size': 24,
    }

is accepted as-is and mapped onto the matching sections.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, field
from pathlib import Path

from .data_pipeline.bls import DEFAULT_MAX_YEARS, default_fixture_dir
from .data_pipeline.catalog import INDICATORS, INDUSTRIES, get_industry
from .errors import ConfigError, ContractError
from .iehi import IEHIWeights
from .lstnet import LSTNetConfig
from .training import TrainConfig

PROFILES = ("paper-appendix", "paper-prose", "custom")

_PROFILE_VALUES: dict[str, dict[str, dict[str, str]]] = {
    "paper-appendix": {
        "model": {
            "cnn_channels": "32",
            "cnn_kernel_size": "6",
            "rnn_hidden_size": "100",
            "skip_size": "24",
            "skip_hidden_size": "5",
            "highway_window": "24",
            "horizon": "7",
        },
        "training": {
            "batch_size": "128",
            "epochs": "100",
            "learning_rate": "0.001",
            "sequence_length": "28",
            "test_size": "0.2",
            "val_size": "0.2",
        },
    },
    "paper-prose": {
        "model": {
            "cnn_channels": "32",
            "cnn_kernel_size": "7",
            "rnn_hidden_size": "64",
            "skip_size": "4, 24",
            "skip_hidden_size": "5",
            "highway_window": "7",
            "horizon": "7",
        },
        "training": {
            "batch_size": "128",
            "epochs": "100",
            "learning_rate": "0.001",
            "sequence_length": "30",
            "test_size": "0.2",
            "val_size": "0.2",
        },
    },
}

_COMMON: dict[str, dict[str, str]] = {
    "run": {"seed": "0", "offline": "false", "workers": "1", "diagnostic": "false"},
    "model": {"target": "employees_k"},
    "training": {"optimizer": "adam", "clip_norm": "10"},
    "data": {
        "start": "2008-03",
        "end": "2024-12",
        "industries": "all",
        "max_years_per_request": str(DEFAULT_MAX_YEARS),
        "api_key": "",
    },
    "paths": {
        "raw_dir": "data/raw",
        "panel_dir": "data/panels",
        "checkpoint_dir": "checkpoints",
        "report_dir": "reports",
        "fixture_dir": "",
    },
    "iehi": {"volatility": "0.4", "separation": "0.25", "hiring": "0.2", "trend": "0.15", "window": "12"},
}

_KNOWN = {
    section: set(keys) | set(_PROFILE_VALUES["paper-appendix"].get(section, {}))
    for section, keys in _COMMON.items()
}
_KNOWN["run"].add("profile")
_KNOWN["training"] |= set(_PROFILE_VALUES["paper-appendix"]["training"])
_DICT_SECTIONS = {"MODEL_CONFIG": "model", "TRAINING_CONFIG": "training"}


@dataclass(frozen=True)
class RunConfig:
    profile: str
    model: LSTNetConfig
    train: TrainConfig
    start: tuple[int, int]
    end: tuple[int, int]
    industries: tuple[str, ...]
    raw_dir: Path
    panel_dir: Path
    checkpoint_dir: Path
    report_dir: Path
    fixture_dir: Path
    offline: bool = False
    max_years: int = DEFAULT_MAX_YEARS
    workers: int = 1
    diagnostic: bool = False
    iehi_weights: IEHIWeights = field(default_factory=IEHIWeights)
    iehi_window: int = 12
    api_key: str = field(default="", repr=False)
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def seed(self) -> int:
        return self.train.seed

    def to_ini(self) -> str:
        """The fully resolved configuration, loadable with :func:`load_config`."""
        parser = configparser.ConfigParser(interpolation=None)
        for section in ("run", "model", "training", "data", "paths", "iehi"):
            parser[section] = dict(sorted(self.raw[section].items()))
        parser["run"]["profile"] = self.profile
        # the echo is written to disk, so a key from the file is not copied into it
        parser["data"]["api_key"] = ""
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()


def _translate_dict_listing(text: str) -> str:
    """Rewrite ``NAME = {'key': value, ...}`` blocks as INI sections."""
    out = []
    for line in text.splitlines():
        stripped = line.strip()
        m = re.match(r"^([A-Z_]+)\s*=\s*\{\s*$", stripped)
        if m:
            out.append(f"[{_DICT_SECTIONS.get(m.group(1), m.group(1).lower())}]")
            continue
        if stripped == "}":
            continue
        m = re.match(r"""^['"](\w+)['"]\s*:\s*(.+?),?\s*(#.*)?$""", stripped)
        if m:
            out.append(f"{m.group(1)} = {m.group(2).strip().strip(chr(39)).strip(chr(34))}")
            continue
        out.append(line)
    return "\n".join(out) + "\n"


def _parse_month(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d{4})-(\d{1,2})", text.strip())
    if not m or not 1 <= int(m.group(2)) <= 12:
        raise ConfigError(f"expected YYYY-MM, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    text = text.strip().strip("[]()")
    return tuple(int(p) for p in re.split(r"[,\s]+", text) if p)


def resolve(values: dict[str, dict[str, str]], base_dir: Path | None = None) -> RunConfig:
    try:
        return _resolve(values, base_dir or Path.cwd())
    except (ContractError, ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _resolve(v: dict[str, dict[str, str]], base: Path) -> RunConfig:
    run, model, training, data, paths, iehi = (v[s] for s in ("run", "model", "training", "data", "paths", "iehi"))
    target = model["target"].strip()
    if target not in INDICATORS:
        raise ConfigError(f"target must be one of {INDICATORS}, got {target!r}")
    lst = LSTNetConfig(
        window=int(training["sequence_length"]),
        features=len(INDICATORS),
        conv_channels=int(model["cnn_channels"]),
        conv_kernel=int(model["cnn_kernel_size"]),
        rnn_hidden=int(model["rnn_hidden_size"]),
        skip_lengths=_ints(model["skip_size"]),
        skip_hidden=int(model["skip_hidden_size"]),
        highway_window=int(model["highway_window"]),
        horizon=int(model["horizon"]),
        target_index=INDICATORS.index(target),
    )
    clip = training["clip_norm"].strip().lower()
    tr = TrainConfig(
        batch_size=int(training["batch_size"]),
        epochs=int(training["epochs"]),
        learning_rate=float(training["learning_rate"]),
        seed=int(run["seed"]),
        val_fraction=float(training["val_size"]),
        test_fraction=float(training["test_size"]),
        optimizer=training["optimizer"].strip().lower(),
        clip_norm=None if clip in ("", "none", "0") else float(clip),
    )
    names = data["industries"].strip()
    if names.lower() == "all":
        industries = tuple(i.slug for i in INDUSTRIES)
    else:
        industries = tuple(get_industry(n).slug for n in names.split(",") if n.strip())
    start, end = _parse_month(data["start"]), _parse_month(data["end"])
    if start > end:
        raise ConfigError(f"data start {data['start']} after end {data['end']}")

    def path(key: str) -> Path:
        p = Path(paths[key]).expanduser()
        return p if p.is_absolute() else base / p

    fixture = default_fixture_dir() if not paths["fixture_dir"].strip() else path("fixture_dir")
    return RunConfig(
        profile=run["profile"],
        model=lst,
        train=tr,
        start=start,
        end=end,
        industries=industries,
        raw_dir=path("raw_dir"),
        panel_dir=path("panel_dir"),
        checkpoint_dir=path("checkpoint_dir"),
        report_dir=path("report_dir"),
        fixture_dir=fixture,
        offline=_bool(run["offline"]),
        max_years=int(data["max_years_per_request"]),
        workers=int(run["workers"]),
        diagnostic=_bool(run["diagnostic"]),
        iehi_weights=IEHIWeights(*(float(iehi[c]) for c in ("volatility", "separation", "hiring", "trend"))),
        iehi_window=int(iehi["window"]),
        api_key=data["api_key"].strip(),
        raw=v,
    )


def profile_values(profile: str) -> dict[str, dict[str, str]]:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {', '.join(PROFILES)}")
    source = _PROFILE_VALUES["paper-appendix" if profile == "custom" else profile]
    merged = {s: dict(keys) for s, keys in _COMMON.items()}
    for section, keys in source.items():
        merged[section].update(keys)
    merged["run"]["profile"] = profile
    return merged


def load_config(path: str | Path | None = None, profile: str | None = None,
                overrides: dict[str, dict[str, str]] | None = None) -> RunConfig:
    """Resolve profile defaults, then the file at ``path``, then ``overrides``.

    Relative paths are resolved against the working directory.
    """
    file_values: dict[str, dict[str, str]] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(_translate_dict_listing(path.read_text()))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        file_values = {s: dict(parser[s]) for s in parser.sections()}
        for section, keys in file_values.items():
            if section not in _KNOWN:
                raise ConfigError(f"{path}: unknown section [{section}]")
            unknown = set(keys) - _KNOWN[section]
            if unknown:
                raise ConfigError(f"{path}: unknown keys in [{section}]: {', '.join(sorted(unknown))}")

    chosen = profile or file_values.get("run", {}).get("profile") or "paper-appendix"
    values = profile_values(chosen)
    for layer in (file_values, overrides or {}):
        for section, keys in layer.items():
            values.setdefault(section, {}).update(keys)
    values["run"]["profile"] = chosen
    return resolve(values)
