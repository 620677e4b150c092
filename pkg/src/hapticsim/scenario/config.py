"""Declarative scenario configuration.

Configs are TOML documents. Quantities may carry unit suffixes (``"300 g"``,
``"5 cm"``) and are converted to SI on load; bare numbers are SI already.
Unknown keys are rejected and every problem found is reported at once.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..units import UnitError, parse_quantity, parse_vector

TASK_KINDS = ("grasp_lift", "slide_regrasp", "peg_in_hole")
SHAPES = ("box", "sphere", "plane")
HAPTIC_MODES = ("on", "off", "pressure", "vibration")


class ConfigError(ValueError):
    """Config problems; ``errors`` lists every one found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario config:\n  " + "\n  ".join(self.errors))


def q(dim: str, default=dataclasses.MISSING, **kw):
    return field(default=default, metadata={"dim": dim}, **kw)


def vec(dim: str, default, size: int = 3):
    return field(default_factory=lambda: tuple(default), metadata={"dim": dim, "vector": size})


def nested(cls, many: bool = False):
    if many:
        return field(default_factory=list, metadata={"items": cls})
    return field(default_factory=cls, metadata={"nested": cls})


@dataclass(frozen=True)
class BodySpec:
    name: str = ""
    shape: str = "box"
    # full edge lengths for boxes; size[0] is the radius for spheres
    size: tuple = vec("length", (0.05, 0.05, 0.05))
    mass: float = q("mass", 0.1)
    position: tuple = vec("length", (0.0, 0.0, 0.0))
    # axis-angle rotation vector, rad
    rotation: tuple = vec("dimensionless", (0.0, 0.0, 0.0))
    mu_static: float = q("dimensionless", 0.5)
    mu_dynamic: float = q("dimensionless", 0.5)
    static: bool = False


@dataclass(frozen=True)
class SceneSpec:
    bodies: list = nested(BodySpec, many=True)


@dataclass(frozen=True)
class FingerSpec:
    name: str = ""
    # initial fingertip centre; the finger extends backwards along -axis
    position: tuple = vec("length", (0.0, 0.0, 0.0))
    axis: tuple = vec("dimensionless", (0.0, 0.0, -1.0))
    # unit direction of the pad reference point from the tip centre
    pad: tuple = vec("dimensionless", (0.0, 0.0, 0.0))
    tip_radius: float = q("length", 0.008)
    proximal_radius: float = q("length", 0.007)
    phalange_mass: float = q("mass", 0.010)
    mu_static: float = q("dimensionless", 1.0)
    mu_dynamic: float = q("dimensionless", 1.0)


@dataclass(frozen=True)
class HandSpec:
    coupling_k: float = q("stiffness", 100.0)
    linear_stiffness: float = q("stiffness", 100.0)
    # negative: critical damping for the phalange mass
    linear_damping: float = q("damping", -1.0)
    angular_stiffness: float = q("angular_stiffness", 0.05)
    angular_damping: float = q("angular_damping", -1.0)
    fingers: list = nested(FingerSpec, many=True)


@dataclass(frozen=True)
class Keyframe:
    time: float = q("time", 0.0)
    # finger name -> tracked fingertip position (m)
    targets: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TrajectorySpec:
    keyframes: list = field(default_factory=list)


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "grasp_lift"
    object: str = ""
    # grasp_lift
    target_height: float = q("length", 0.10)
    target_radius: float = q("length", 0.015)
    hold_time: float = q("time", 3.0)
    break_force_total: float = q("force", 8.0)
    # drop rule: object bottom within this distance of its resting surface after a lift
    ground_height: float = q("length", 0.0)
    drop_margin: float = q("length", 0.001)
    lift_margin: float = q("length", 0.01)
    # slide_regrasp release profile (applied on top of the keyframes)
    release_time: float = q("time", 1.0)
    release_jitter: float = q("time", 0.0)
    release_width: float = q("length", 0.01)
    release_duration: float = q("time", 0.0)
    # scripted responder; negative delay disables it
    response_delay: float = q("time", 0.25)
    response_width: float = q("length", 0.02)
    response_duration: float = q("time", 0.1)
    closure_speed: float = q("speed", 0.02)
    slip_speed: float = q("speed", 1e-3)
    settle_time: float = q("time", 0.5)
    # peg_in_hole
    hole_size: float = q("length", 0.0395)
    hole_center: tuple = vec("length", (0.0, 0.0), size=2)
    hole_bottom: float = q("length", 1.04)
    hole_thickness: float = q("length", 0.025)
    platform_height: float = q("length", 0.80)


@dataclass(frozen=True)
class HapticsSpec:
    mode: str = "on"
    rate: float = q("frequency", 500.0)
    decay: float = q("decay", 469.0)
    transient_frequency: float = q("frequency", 128.0)
    cutoff: float = q("time", 0.1)
    slide_frequency: float = q("frequency", 100.0)
    amplitude_gain: float = q("amplitude_gain", 1.0)
    max_amplitude: float = q("force", 1.0)


@dataclass(frozen=True)
class ActuatorSpec:
    max_force: float = q("force", 1.36)
    theoretical_max: float = q("force", 1.57)
    current_at_max: float = q("current", 0.33)
    perception_threshold: float = q("force", 0.04)
    f_peak: float = q("frequency", 140.0)
    q_factor: float = q("dimensionless", 2.0)
    current_step: float = q("current", 0.03)
    quantize: bool = False


@dataclass(frozen=True)
class SolverSpec:
    iterations: int = 60
    tolerance: float = q("dimensionless", 1e-8)
    baumgarte: float = q("dimensionless", 0.2)
    slop: float = q("length", 1e-4)
    slip_speed_epsilon: float = q("speed", 1e-4)
    contact_margin: float = q("length", 5e-4)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    dt: float = q("time", 0.01)
    timeout: float = q("time", 60.0)
    seed: int = 0
    gravity: float = q("acceleration", 9.81)
    scene: SceneSpec = nested(SceneSpec)
    hand: HandSpec = nested(HandSpec)
    trajectory: TrajectorySpec = nested(TrajectorySpec)
    task: TaskSpec = nested(TaskSpec)
    haptics: HapticsSpec = nested(HapticsSpec)
    actuator: ActuatorSpec = nested(ActuatorSpec)
    solver: SolverSpec = nested(SolverSpec)

    def with_overrides(self, **changes) -> "ScenarioConfig":
        """Copy with top-level or ``section__field`` overrides (e.g. ``haptics__mode='off'``)."""
        top = {}
        sections: dict[str, dict] = {}
        for key, value in changes.items():
            if "__" in key:
                sec, name = key.split("__", 1)
                sections.setdefault(sec, {})[name] = value
            else:
                top[key] = value
        for sec, vals in sections.items():
            top[sec] = dataclasses.replace(getattr(self, sec), **vals)
        out = dataclasses.replace(self, **top)
        validate(out)
        return out


# ---------------------------------------------------------------- parsing


def _parse_dataclass(cls, data, path: str, errors: list[str]):
    if not isinstance(data, dict):
        errors.append(f"{path or '<root>'}: expected a table")
        return cls()
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            errors.append(f"{_join(path, key)}: unknown key")
    values = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        raw = data[f.name]
        where = _join(path, f.name)
        meta = f.metadata
        try:
            if "items" in meta:
                if not isinstance(raw, list):
                    errors.append(f"{where}: expected an array of tables")
                    continue
                values[f.name] = [_parse_dataclass(meta["items"], item, f"{where}[{i}]", errors) for i, item in enumerate(raw)]
            elif "nested" in meta:
                values[f.name] = _parse_dataclass(meta["nested"], raw, where, errors)
            elif cls is TrajectorySpec and f.name == "keyframes":
                values[f.name] = [_parse_keyframe(item, f"{where}[{i}]", errors) for i, item in enumerate(raw)]
            elif "vector" in meta:
                values[f.name] = parse_vector(raw, meta["dim"], meta["vector"])
            elif "dim" in meta:
                values[f.name] = parse_quantity(raw, meta["dim"])
            elif f.type in ("bool", bool):
                if not isinstance(raw, bool):
                    raise UnitError("expected true or false")
                values[f.name] = raw
            elif f.type in ("int", int):
                if isinstance(raw, bool) or not isinstance(raw, int):
                    raise UnitError("expected an integer")
                values[f.name] = raw
            elif f.type in ("str", str):
                if not isinstance(raw, str):
                    raise UnitError("expected a string")
                values[f.name] = raw
            else:  # pragma: no cover - schema bug
                raise UnitError(f"unsupported field type {f.type}")
        except UnitError as exc:
            errors.append(f"{where}: {exc}")
    return cls(**values)


def _parse_keyframe(data, path, errors) -> Keyframe:
    if not isinstance(data, dict):
        errors.append(f"{path}: expected a table")
        return Keyframe()
    if "targets" in data:
        errors.append(f"{_join(path, 'targets')}: unknown key (list finger targets directly)")
    time = 0.0
    if "time" not in data:
        errors.append(f"{path}: missing time")
    else:
        try:
            time = parse_quantity(data["time"], "time")
        except UnitError as exc:
            errors.append(f"{_join(path, 'time')}: {exc}")
    targets = {}
    for key, raw in data.items():
        if key in ("time", "targets"):
            continue
        try:
            targets[key] = parse_vector(raw, "length")
        except UnitError as exc:
            errors.append(f"{_join(path, key)}: {exc}")
    return Keyframe(time=time, targets=targets)


def _join(path: str, key) -> str:
    return f"{path}.{key}" if path else str(key)


def config_from_dict(data: dict) -> ScenarioConfig:
    errors: list[str] = []
    cfg = _parse_dataclass(ScenarioConfig, data, "", errors)
    if errors:
        raise ConfigError(errors)
    validate(cfg)
    return cfg


def config_to_dict(cfg) -> dict:
    """Plain-data form in SI units (keys sorted by schema order)."""
    if isinstance(cfg, Keyframe):
        out = {"time": cfg.time}
        out.update({k: list(v) for k, v in cfg.targets.items()})
        return out
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            out[f.name] = config_to_dict(value)
        elif isinstance(value, list):
            out[f.name] = [config_to_dict(v) for v in value]
        elif isinstance(value, tuple):
            out[f.name] = list(value)
        else:
            out[f.name] = value
    return out


def config_digest(cfg: ScenarioConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canonical.encode()).hexdigest()


def read_config(path) -> ScenarioConfig:
    import tomli

    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror or exc}"]) from exc
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        # tomli reports "(at line L, column C)"
        raise ConfigError([f"{path}: parse error {exc}"]) from exc
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError([f"{path}: {e}" for e in exc.errors]) from None


def write_config(cfg: ScenarioConfig, path) -> None:
    import tomli_w

    Path(path).write_text(tomli_w.dumps(config_to_dict(cfg)))


# ---------------------------------------------------------------- validation


def validate(cfg: ScenarioConfig) -> None:
    errors: list[str] = []
    if not cfg.dt > 0:
        errors.append("dt must be > 0")
    if not cfg.timeout > 0:
        errors.append("timeout must be > 0")
    names = [b.name for b in cfg.scene.bodies]
    for i, b in enumerate(cfg.scene.bodies):
        where = f"scene.bodies[{i}]"
        if not b.name:
            errors.append(f"{where}: name is required")
        if b.shape not in SHAPES:
            errors.append(f"{where}.shape: {b.shape!r} not one of {', '.join(SHAPES)}")
        if b.shape == "plane" and not b.static:
            errors.append(f"{where}: a plane must be static")
        if b.shape == "box" and min(b.size) <= 0:
            errors.append(f"{where}.size: box edges must be > 0")
        if b.shape == "sphere" and b.size[0] <= 0:
            errors.append(f"{where}.size: sphere radius must be > 0")
        if not b.static and not b.mass > 0:
            errors.append(f"{where}.mass: must be > 0")
        if not 0 <= b.mu_dynamic <= b.mu_static:
            errors.append(f"{where}: need 0 <= mu_dynamic <= mu_static")
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        errors.append(f"scene.bodies: duplicate names {dup}")
    h = cfg.hand
    fnames = [f.name for f in h.fingers]
    if not fnames:
        errors.append("hand.fingers: at least one finger is required")
    if len(set(fnames)) != len(fnames):
        errors.append("hand.fingers: duplicate finger names")
    for name in ("coupling_k", "linear_stiffness", "angular_stiffness"):
        if getattr(h, name) < 0:
            errors.append(f"hand.{name}: must be >= 0")
    for i, f in enumerate(h.fingers):
        if math.hypot(*f.axis) == 0:
            errors.append(f"hand.fingers[{i}].axis: must be non-zero")
        if f.tip_radius <= 0 or f.proximal_radius <= 0 or f.phalange_mass <= 0:
            errors.append(f"hand.fingers[{i}]: radii and mass must be > 0")
    kf = cfg.trajectory.keyframes
    if not kf:
        errors.append("trajectory.keyframes: at least one keyframe is required")
    for i, k in enumerate(kf):
        missing = [n for n in fnames if n not in k.targets]
        extra = [n for n in k.targets if n not in fnames]
        if missing:
            errors.append(f"trajectory.keyframes[{i}]: no target for fingers {missing}")
        if extra:
            errors.append(f"trajectory.keyframes[{i}]: unknown fingers {extra}")
        if i and not k.time > kf[i - 1].time:
            errors.append(f"trajectory.keyframes[{i}]: times must be strictly increasing")
    t = cfg.task
    if t.kind not in TASK_KINDS:
        errors.append(f"task.kind: {t.kind!r} not one of {', '.join(TASK_KINDS)}")
    if t.object not in names:
        errors.append(f"task.object: no scene body named {t.object!r}")
    for name in ("target_height", "target_radius", "hold_time", "break_force_total", "hole_size", "closure_speed"):
        if not getattr(t, name) > 0:
            errors.append(f"task.{name}: must be > 0")
    if t.kind == "slide_regrasp" and not t.release_width > 0:
        errors.append("task.release_width: must be > 0")
    hp = cfg.haptics
    if hp.mode not in HAPTIC_MODES:
        errors.append(f"haptics.mode: {hp.mode!r} not one of {', '.join(HAPTIC_MODES)}")
    if not 100.0 <= hp.rate <= 500.0:
        errors.append("haptics.rate: must lie in [100, 500] Hz")
    for name in ("decay", "transient_frequency", "cutoff", "slide_frequency"):
        if not getattr(hp, name) > 0:
            errors.append(f"haptics.{name}: must be > 0")
    a = cfg.actuator
    if not 0 < a.perception_threshold < a.max_force:
        errors.append("actuator: need 0 < perception_threshold < max_force")
    if not 100.0 <= a.f_peak <= 180.0:
        errors.append("actuator.f_peak: must lie in [100, 180] Hz")
    if cfg.solver.iterations < 1:
        errors.append("solver.iterations: must be >= 1")
    if errors:
        raise ConfigError(errors)


def load_packaged(name: str) -> ScenarioConfig:
    """One of the bundled scenario configs by stem, e.g. ``"glass_cube_grasp"``."""
    return read_config(packaged_path(name))


def packaged_path(name: str) -> Path:
    from importlib import resources

    path = Path(str(resources.files("hapticsim") / "data" / "scenarios" / f"{name}.toml"))
    if not path.exists():
        raise ConfigError([f"no packaged scenario named {name!r}"])
    return path


def packaged_names() -> list[str]:
    from importlib import resources

    root = Path(str(resources.files("hapticsim") / "data" / "scenarios"))
    return sorted(p.stem for p in root.glob("*.toml"))


def as_json(cfg: ScenarioConfig) -> Any:
    return config_to_dict(cfg)
