"""Run configuration: a flat key=value text format with typed validation.

Every experiment knob lives here so a run can be archived alongside its
results. Unknown keys, duplicate keys, type errors and out-of-range values
are all hard errors; every accepted key changes observable behavior.
"""

from dataclasses import dataclass, fields

from .errors import ConfigError

_ADAPTORS = ("metadiff", "gda", "momentum-gda")


@dataclass(frozen=True)
class RunConfig:
    # single root seed: world generation, parameter init, the training
    # stream and per-task evaluation seeds all derive from it
    seed: int = 0
    # synthetic world
    world_classes: int = 50
    world_dim: int = 32
    world_noise: float = 0.3
    world_base_fraction: float = 0.8
    # variance schedule
    schedule_steps: int = 200
    schedule_beta_start: float = 1e-4
    schedule_beta_end: float = 0.02
    # base learner
    classifier: str = "cosine"
    temperature: float = 10.0
    # noise predictor
    unet_skips: str = "additive"
    unet_grad_normalize: bool = False
    # episode protocol (shared by training episodes and evaluation)
    way: int = 5
    shot: int = 1
    queries_per_class: int = 15
    # meta-training
    train_steps: int = 20000
    train_lr: float = 1e-4
    train_weight_decay: float = 5e-4
    train_checkpoint_interval: int = 1000
    # target-weight oracle (auxiliary-data GDA)
    target_gda_steps: int = 200
    target_gda_lr: float = 0.5
    target_aux_per_class: int = 200
    # adaptor under evaluation and baseline hyperparameters
    adaptor: str = "metadiff"
    gda_steps: int = 100
    gda_lr: float = 0.1
    gda_momentum: float = 0.9
    gda_init: str = "zeros"
    # evaluation protocol
    eval_tasks: int = 600
    eval_workers: int = 1
    eval_weight_draws: int = 1

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _convert(name: str, text: str, typ):
    try:
        if typ is bool:
            low = text.lower()
            if low in ("true", "false"):
                return low == "true"
            raise ValueError("expected true or false")
        return typ(text)
    except ValueError as exc:
        raise ConfigError(f"config key {name!r}: cannot parse {text!r} as {typ.__name__} ({exc})")


def parse_config(text: str) -> RunConfig:
    """Parse key = value lines; '#' starts a comment, blank lines ignored."""
    types = {f.name: f.type for f in fields(RunConfig)}
    # dataclass field types arrive as strings under PEP 563-style access
    typemap = {"int": int, "float": float, "str": str, "bool": bool}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        typ = types[key] if not isinstance(types[key], str) else typemap[types[key]]
        values[key] = _convert(key, val, typ)
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    return parse_config(text)


def from_dict(d: dict) -> RunConfig:
    names = {f.name for f in fields(RunConfig)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**d)
    validate(cfg)
    return cfg


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    """Apply 'key=value' strings on top of an existing config."""
    if not overrides:
        return cfg
    lines = []
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        lines.append(item)
    base = cfg.to_dict()
    patch = parse_config("\n".join(lines))  # reuse parsing/validation machinery
    for item in lines:
        key = item.partition("=")[0].strip()
        base[key] = getattr(patch, key)
    return from_dict(base)


def dump(cfg: RunConfig) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in fields(RunConfig))


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def num_base_classes(cfg: RunConfig) -> int:
    return min(max(int(cfg.world_classes * cfg.world_base_fraction), 1), cfg.world_classes - 1)


def validate(cfg: RunConfig) -> None:
    _require(cfg.seed >= 0, "seed must be >= 0")
    _require(cfg.world_classes >= 2, "world_classes must be >= 2")
    _require(
        cfg.world_dim >= 8 and cfg.world_dim % 4 == 0,
        "world_dim must be >= 8 and divisible by 4",
    )
    _require(cfg.world_noise >= 0.0, "world_noise must be >= 0")
    _require(0.0 < cfg.world_base_fraction < 1.0, "world_base_fraction must be in (0, 1)")
    _require(cfg.schedule_steps >= 1, "schedule_steps must be >= 1")
    _require(
        0.0 < cfg.schedule_beta_start <= cfg.schedule_beta_end < 1.0,
        "need 0 < schedule_beta_start <= schedule_beta_end < 1",
    )
    _require(cfg.classifier in ("linear", "cosine"), "classifier must be linear or cosine")
    _require(cfg.temperature > 0.0, "temperature must be positive")
    _require(cfg.unet_skips in ("additive", "none"), "unet_skips must be additive or none")
    _require(cfg.way >= 2, "way must be >= 2")
    _require(cfg.shot >= 1, "shot must be >= 1")
    _require(cfg.queries_per_class >= 1, "queries_per_class must be >= 1")
    _require(cfg.train_steps >= 0, "train_steps must be >= 0")
    _require(cfg.train_lr > 0.0, "train_lr must be positive")
    _require(cfg.train_weight_decay >= 0.0, "train_weight_decay must be >= 0")
    _require(cfg.train_checkpoint_interval >= 1, "train_checkpoint_interval must be >= 1")
    _require(cfg.target_gda_steps >= 0, "target_gda_steps must be >= 0")
    _require(cfg.target_gda_lr > 0.0, "target_gda_lr must be positive")
    _require(cfg.target_aux_per_class >= 1, "target_aux_per_class must be >= 1")
    _require(cfg.adaptor in _ADAPTORS, f"adaptor must be one of {_ADAPTORS}")
    _require(cfg.gda_steps >= 0, "gda_steps must be >= 0")
    _require(cfg.gda_lr > 0.0, "gda_lr must be positive")
    _require(0.0 <= cfg.gda_momentum < 1.0, "gda_momentum must lie in [0, 1)")
    _require(cfg.gda_init in ("zeros", "normal"), "gda_init must be zeros or normal")
    _require(cfg.eval_tasks >= 1, "eval_tasks must be >= 1")
    _require(cfg.eval_workers >= 1, "eval_workers must be >= 1")
    _require(cfg.eval_weight_draws >= 1, "eval_weight_draws must be >= 1")
    n_base = num_base_classes(cfg)
    _require(
        n_base >= cfg.way and cfg.world_classes - n_base >= cfg.way,
        "both class splits must hold at least 'way' classes",
    )
