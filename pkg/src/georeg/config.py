"""Flat ``key = value`` config files with repeated ``[stage]`` sections.

Example::

    d = 400
    activation = tanh

    [stage]
    kind = plain
    iterations = 300
    mu = 0.06
    alpha1 = 0.99

Keys before the first ``[stage]`` header are global (``TrainConfig`` fields
plus the run keys in ``RUN_KEYS``); keys inside a section belong to that
stage.  ``alpha1 .. alphaR`` set the per-fixed-function momentum
coefficients.  Overrides use the same keys: a bare stage key applies to every
stage, ``stageN.key`` (1-based) to a single one.
"""

from dataclasses import fields

from .trainer import ConfigError, StageConfig, TrainConfig

RUN_KEYS = {
    "train_images": None, "train_labels": None, "test_images": None, "test_labels": None,
    "out": "model.greg", "metrics": None, "train_limit": 50000,
}
_GLOBAL_TYPES = {f.name: f for f in fields(TrainConfig) if f.name != "stages"}
_STAGE_TYPES = {f.name: f for f in fields(StageConfig) if f.name != "alpha"}
_BOOL = {"true": True, "yes": True, "1": True, "on": True,
         "false": False, "no": False, "0": False, "off": False}


def _convert(key, raw, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            return _BOOL[raw.lower()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except (KeyError, ValueError):
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def _none_or(key, raw, kind):
    if raw.strip().lower() in ("", "none"):
        return None
    return _convert(key, raw, kind())


class RunConfig:
    """A ``TrainConfig`` plus data/output paths."""

    def __init__(self, train=None, **run):
        self.train = train or TrainConfig(stages=[])
        self.run = dict(RUN_KEYS)
        self.run.update(run)

    def set_global(self, key, raw):
        if key in RUN_KEYS:
            if key == "train_limit":
                self.run[key] = _none_or(key, raw, int)
            elif raw.strip().lower() in ("", "none"):
                self.run[key] = None
            else:
                self.run[key] = raw.strip()
        elif key in ("minibatch", "workers"):
            setattr(self.train, key, _none_or(key, raw, int))
        elif key in _GLOBAL_TYPES:
            setattr(self.train, key, _convert(key, raw, getattr(TrainConfig(), key)))
        else:
            raise ConfigError(f"unknown config key {key!r}")

    def echo(self):
        """The effective configuration, as config-file lines."""
        lines = [f"{k} = {v}" for k, v in self.run.items()]
        lines += [f"{k} = {getattr(self.train, k)}" for k in _GLOBAL_TYPES]
        for stage in self.train.stages:
            lines.append("[stage]")
            lines += [f"{k} = {getattr(stage, k)}" for k in _STAGE_TYPES]
            lines += [f"alpha{i} = {a}" for i, a in enumerate(stage.alpha, 1)]
        return lines


def set_stage_key(stage, key, raw):
    if key.startswith("alpha") and key[5:].isdigit() and key != "alpha0":
        k = int(key[5:])
        if k < 1:
            raise ConfigError(f"bad momentum key {key!r}")
        while len(stage.alpha) < k:
            stage.alpha.append(stage.alpha[-1] if stage.alpha else 0.0)
        stage.alpha[k - 1] = _convert(key, raw, 0.0)
    elif key in _STAGE_TYPES:
        setattr(stage, key, _convert(key, raw, getattr(StageConfig(), key)))
    else:
        raise ConfigError(f"unknown stage key {key!r}")


def parse_config(text):
    cfg = RunConfig()
    stage = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line != "[stage]":
                raise ConfigError(f"line {lineno}: unknown section {line}")
            stage = StageConfig()
            cfg.train.stages.append(stage)
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if stage is None:
            cfg.set_global(key, raw)
        else:
            set_stage_key(stage, key, raw)
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def apply_override(cfg, assignment):
    if "=" not in assignment:
        raise ConfigError(f"override must be key=value, got {assignment!r}")
    key, raw = (part.strip() for part in assignment.split("=", 1))
    if key.startswith("stage") and "." in key:
        index, skey = key[5:].split(".", 1)
        if not index.isdigit() or not 1 <= int(index) <= len(cfg.train.stages):
            raise ConfigError(f"no stage {index} for override {key!r}")
        set_stage_key(cfg.train.stages[int(index) - 1], skey, raw)
    elif key in _STAGE_TYPES or (key.startswith("alpha") and key[5:].isdigit()):
        if not cfg.train.stages:
            raise ConfigError(f"stage key {key!r} given but the config has no stages")
        for stage in cfg.train.stages:
            set_stage_key(stage, key, raw)
    else:
        cfg.set_global(key, raw)
