"""YAML experiment documents.

Layout::

    version: amdlab/1
    world: ring8            # or {name: custom, components: [...]}
    method: amd
    seed: 0
    operator: {...}         # overrides on top of the method preset
    reward: {kind: global}
    training: {...}         # remaining ExperimentConfig fields

Validation collects every problem before raising, so one run of
``amdlab train`` reports all of them.
"""

from dataclasses import MISSING, fields

import yaml

from .. import operators as ops
from .. import reward as rewardlib
from ..engine import SCHEMA_VERSION, ExperimentConfig
from ..errors import ConfigError

TOP_KEYS = ("version", "world", "method", "seed", "operator", "reward", "training")
_SPECIAL = ("world", "operator", "reward", "seed")
TRAINING_KEYS = tuple(f.name for f in fields(ExperimentConfig) if f.name not in _SPECIAL)


def _default(f):
    if f.default is not MISSING:
        return f.default
    return f.default_factory()


def _coerce(name, value, like, problems):
    """Match the type of the documented default; YAML reads ``1e-3`` as a string."""
    if isinstance(like, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(like, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(like, float):
        if not isinstance(value, bool):
            try:
                return float(value)
            except (TypeError, ValueError):
                pass
    elif isinstance(like, str):
        if isinstance(value, str):
            return value
    else:
        return value
    problems.append(f"{name}: expected {type(like).__name__}, got {value!r}")
    return like


def _section(doc, key, problems):
    sec = doc.get(key)
    if sec is None:
        return {}
    if not isinstance(sec, dict):
        problems.append(f"{key}: expected a mapping, got {type(sec).__name__}")
        return {}
    return dict(sec)


def _operator(doc, problems):
    sec = _section(doc, "operator", problems)
    method = doc.get("method", sec.pop("method", None))
    if "method" in doc and "method" in sec and sec["method"] != doc["method"]:
        problems.append("operator.method disagrees with the top-level method")
    if method is None:
        problems.append("missing method; valid: " + ", ".join(ops.METHODS))
        return None
    base = ops.preset(method) if method in ops.METHODS else ops.OperatorConfig()
    known = {f.name: getattr(base, f.name) for f in fields(ops.OperatorConfig)}
    kw = {}
    for k, v in sec.items():
        if k not in known:
            problems.append(f"unknown key operator.{k}")
            continue
        kw[k] = _coerce(f"operator.{k}", v, known[k], problems)
    probe = object.__new__(ops.OperatorConfig)
    for k, v in {**known, **kw, "method": method}.items():
        object.__setattr__(probe, k, v)
    bad = probe.problems()
    if bad:
        problems.extend(p if p.startswith("unknown method") else f"operator: {p}" for p in bad)
        return None
    return ops.preset(method, **kw)


def _reward(doc, problems):
    sec = _section(doc, "reward", problems)
    known = {f.name: _default(f) for f in fields(rewardlib.RewardLandscape)}
    kw = {}
    for k, v in sec.items():
        if k not in known:
            problems.append(f"unknown key reward.{k}")
        elif k == "favored":
            try:
                kw[k] = tuple(int(i) for i in v)
            except (TypeError, ValueError):
                problems.append(f"reward.favored: expected a list of mode indices, got {v!r}")
        else:
            kw[k] = _coerce(f"reward.{k}", v, known[k], problems)
    try:
        return rewardlib.RewardLandscape(**kw)
    except ConfigError as exc:
        problems.extend(f"reward: {p}" for p in exc.problems)
    return None


def config_from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping at top level")
    problems = []
    for k in doc:
        if k not in TOP_KEYS:
            problems.append(f"unknown top-level key {k!r}; valid: {', '.join(TOP_KEYS)}")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        problems.append(f"unsupported version {version!r}; expected {SCHEMA_VERSION!r}")
    world = doc.get("world")
    if world is None:
        problems.append("missing world (a name such as ring8, or a component list)")
    elif not isinstance(world, (str, dict)):
        problems.append(f"world: expected a name or a mapping, got {type(world).__name__}")
        world = None
    op = _operator(doc, problems)
    rw = _reward(doc, problems)
    seed = _coerce("seed", doc.get("seed", 0), 0, problems)
    training = _section(doc, "training", problems)
    defaults = {f.name: _default(f) for f in fields(ExperimentConfig)}
    kw = {}
    for k, v in training.items():
        if k not in TRAINING_KEYS:
            problems.append(f"unknown key training.{k}")
            continue
        kw[k] = _coerce(f"training.{k}", v, defaults[k], problems)
    probe = ExperimentConfig.__new__(ExperimentConfig)
    for k, v in defaults.items():
        setattr(probe, k, kw.get(k, v))
    problems.extend(f"training: {p}" for p in probe.problems())
    if problems or op is None or rw is None or world is None:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems), problems)
    try:
        return ExperimentConfig(world=world, operator=op, reward=rw, seed=seed, **kw)
    except ConfigError as exc:
        raise ConfigError("invalid config:\n  " + "\n  ".join(exc.problems), exc.problems) from None


def parse_config(text):
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config document: {exc}") from None
    return config_from_dict(doc)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def config_to_dict(cfg):
    """Fully resolved document: every default is written out."""
    op = cfg.operator.to_dict()
    method = op.pop("method")
    rw = {f.name: getattr(cfg.reward, f.name) for f in fields(rewardlib.RewardLandscape)}
    rw["favored"] = list(rw["favored"])
    return {
        "version": SCHEMA_VERSION,
        "world": cfg.world,
        "method": method,
        "seed": cfg.seed,
        "operator": op,
        "reward": rw,
        "training": {k: getattr(cfg, k) for k in TRAINING_KEYS},
    }


def serialize_config(cfg):
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=False)
