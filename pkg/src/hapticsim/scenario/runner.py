"""Scenario execution: physics, hand coupling, haptics and task rules, tick by tick."""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..actuator import ActuatorModel, Resonance, apply_threshold, force_to_current
from ..hand import (
    CouplingGains,
    FingerGeometry,
    FingertipContactState,
    HandModel,
    TrackedPose,
    apply_coupling,
    build_finger,
    fingertip_state,
    phalange_targets,
    pinch_distance,
    tracked_pinch_distance,
)
from ..physics import (
    Box,
    FrictionState,
    HalfSpace,
    RigidBody,
    SimulationError,
    SolverSettings,
    Sphere,
    WorldState,
    step,
)
from ..physics.math3d import quat_from_rotvec
from ..synth import (
    AmplitudeMap,
    HapticMode,
    MaterialTransientParams,
    SynthState,
    ingest,
    render_times,
    sample_times,
    tick_events,
)
from ..trace_io import Table, Trace, platform_tag
from .config import ScenarioConfig, config_digest, config_to_dict
from .metrics import (
    Hole,
    Outcome,
    PegStatus,
    RunMetrics,
    box_vertices,
    detect_grasp_response,
    invalid_attempt_notes,
    peg_status,
    slipping,
)


class RunAborted(RuntimeError):
    """Non-finite physics state; ``trace`` holds every tick up to the last good one."""

    def __init__(self, message: str, trace: Trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class Scene:
    world: WorldState
    hand: HandModel
    axes: dict[str, np.ndarray]
    geometry: dict[str, FingerGeometry]
    object_id: int
    names: list[str]


def build_scene(cfg: ScenarioConfig) -> Scene:
    bodies = []
    names = []
    for spec in cfg.scene.bodies:
        if spec.shape == "box":
            shape = Box(tuple(0.5 * s for s in spec.size))
        elif spec.shape == "sphere":
            shape = Sphere(spec.size[0])
        else:
            shape = HalfSpace()
        bodies.append(
            RigidBody(
                id=len(bodies),
                shape=shape,
                mass=spec.mass,
                position=np.array(spec.position),
                orientation=quat_from_rotvec(np.array(spec.rotation)),
                mu_static=spec.mu_static,
                mu_dynamic=spec.mu_dynamic,
                is_static=spec.static,
                name=spec.name,
            )
        )
        names.append(spec.name)
    h = cfg.hand
    gains = CouplingGains(
        linear_stiffness=h.linear_stiffness,
        linear_damping=None if h.linear_damping < 0 else h.linear_damping,
        angular_stiffness=h.angular_stiffness,
        angular_damping=None if h.angular_damping < 0 else h.angular_damping,
    )
    joints, fingers, couplings = [], [], []
    axes, geometry = {}, {}
    for f in h.fingers:
        geo = FingerGeometry(
            radii=(f.proximal_radius, f.tip_radius),
            masses=(f.phalange_mass, f.phalange_mass),
            mu_static=f.mu_static,
            mu_dynamic=f.mu_dynamic,
        )
        pad = np.array(f.pad)
        fb, fj, finger, fc = build_finger(
            f.name, len(bodies), len(joints), f.position, f.axis, geo, gains, pad if np.any(pad) else None
        )
        bodies.extend(fb)
        names.extend(b.name for b in fb)
        joints.extend(fj)
        fingers.append(finger)
        couplings.extend(fc)
        axes[f.name] = np.array(f.axis) / np.linalg.norm(f.axis)
        geometry[f.name] = geo
    s = cfg.solver
    settings = SolverSettings(
        iterations=s.iterations,
        tolerance=s.tolerance,
        baumgarte=s.baumgarte,
        slop=s.slop,
        slip_speed_epsilon=s.slip_speed_epsilon,
        contact_margin=s.contact_margin,
    )
    world = WorldState(bodies, joints, gravity=np.array([0.0, 0.0, -cfg.gravity]), dt=cfg.dt, settings=settings)
    hand = HandModel(tuple(fingers), tuple(couplings), coupling_k=h.coupling_k)
    hand.validate(world)
    return Scene(world, hand, axes, geometry, names.index(cfg.task.object), names)


def actuator_from(cfg: ScenarioConfig) -> ActuatorModel:
    a = cfg.actuator
    return ActuatorModel(
        max_force=a.max_force,
        theoretical_max=a.theoretical_max,
        current_at_max=a.current_at_max,
        perception_threshold=a.perception_threshold,
        resonance=Resonance(a.f_peak, a.q_factor),
        current_step=a.current_step,
    )


def synth_from(cfg: ScenarioConfig, fingers) -> SynthState:
    hp = cfg.haptics
    return SynthState.for_fingers(
        fingers,
        params=MaterialTransientParams(hp.decay, 2.0 * math.pi * hp.transient_frequency, hp.cutoff),
        slide_omega=2.0 * math.pi * hp.slide_frequency,
        mode=HapticMode(hp.mode),
    )


# ---------------------------------------------------------------- trajectory


class Trajectory:
    """Keyframed fingertip targets, linearly interpolated, plus aperture offsets.

    Offsets move each finger along its pad direction: positive opens the grip.
    """

    def __init__(self, cfg: ScenarioConfig, scene: Scene):
        self.times = np.array([k.time for k in cfg.trajectory.keyframes])
        self.targets = {
            f.name: np.array([k.targets[f.name] for k in cfg.trajectory.keyframes]) for f in cfg.hand.fingers
        }
        self.pads = {}
        for f in cfg.hand.fingers:
            pad = np.array(f.pad, dtype=float)
            n = np.linalg.norm(pad)
            self.pads[f.name] = pad / n if n > 0 else np.zeros(3)

    def base(self, finger: str, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Target position and segment velocity at ``t`` (held outside the keyframe span)."""
        pts = self.targets[finger]
        times = self.times
        if t <= times[0]:
            return pts[0].copy(), np.zeros(3)
        if t >= times[-1]:
            return pts[-1].copy(), np.zeros(3)
        k = int(np.searchsorted(times, t, side="right")) - 1
        span = times[k + 1] - times[k]
        s = (t - times[k]) / span
        return pts[k] + s * (pts[k + 1] - pts[k]), (pts[k + 1] - pts[k]) / span


def _ramp(t: float, start: float, duration: float) -> float:
    """0 before ``start``, rising linearly to 1 over ``duration`` (a step when 0)."""
    if t < start - 1e-12:
        return 0.0
    if duration <= 0:
        return 1.0
    return min(1.0, (t - start) / duration)


# ---------------------------------------------------------------- run


@dataclass
class RunResult:
    trace: Trace
    metrics: RunMetrics
    step_times: list[float] = field(default_factory=list)
    scene: Scene | None = None


_STATE_NAMES = {s: s.name.capitalize() for s in FrictionState}


def _physics_columns(scene: Scene) -> tuple[list[str], list[str]]:
    cols = ["tick", "time"]
    kinds = ["i", "f"]
    for b in scene.world.bodies:
        if b.is_static:
            continue
        for c in ("x", "y", "z", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz"):
            cols.append(f"{b.name}.{c}")
            kinds.append("f")
    for f in scene.hand.fingers:
        for c in ("target_x", "target_y", "target_z", "n", "F", "v", "approach"):
            cols.append(f"{f.name}.{c}")
            kinds.append("f")
        cols += [f"{f.name}.state", f"{f.name}.contact"]
        kinds += ["s", "i"]
    cols += [
        "pinch_tracked",
        "pinch_sim",
        "grip_force_total",
        "contact_count",
        "solver_residual",
        "solver_sweeps",
        "ke_free",
        "ke_solved",
        "joint_error_max",
        "peg_status",
    ]
    kinds += ["f", "f", "f", "i", "f", "i", "f", "f", "f", "s"]
    return cols, kinds


CONTACT_COLUMNS = (
    ("tick", "i"),
    ("time", "f"),
    ("body_a", "s"),
    ("body_b", "s"),
    ("px", "f"),
    ("py", "f"),
    ("pz", "f"),
    ("nx", "f"),
    ("ny", "f"),
    ("nz", "f"),
    ("penetration", "f"),
    ("gap", "f"),
    ("normal_impulse", "f"),
    ("t1_impulse", "f"),
    ("t2_impulse", "f"),
    ("mu", "f"),
    ("tangential_speed", "f"),
    ("normal_velocity", "f"),
    ("state", "s"),
)

EVENT_COLUMNS = (
    ("tick", "i"),
    ("time", "f"),
    ("source", "s"),
    ("finger", "s"),
    ("kind", "s"),
    ("value", "f"),
    ("detail", "s"),
)


def _haptic_columns(fingers) -> tuple[list[str], list[str]]:
    cols, kinds = ["sample", "time"], ["i", "f"]
    for f in fingers:
        cols += [f"{f}.force", f"{f}.current"]
        kinds += ["f", "f"]
    return cols, kinds


def run(cfg: ScenarioConfig, progress=None) -> RunResult:
    """Execute one scenario deterministically; see the task rules in :class:`_Rules`."""
    scene = build_scene(cfg)
    world = scene.world
    hand = scene.hand
    finger_names = [f.name for f in hand.fingers]
    traj = Trajectory(cfg, scene)
    task = cfg.task
    rng = np.random.default_rng(cfg.seed)
    release_at = task.release_time + (rng.uniform(0.0, task.release_jitter) if task.release_jitter > 0 else 0.0)
    actuator = actuator_from(cfg)
    synth = synth_from(cfg, finger_names)
    amp_map = AmplitudeMap(cfg.haptics.amplitude_gain, cfg.haptics.max_amplitude)
    rate = cfg.haptics.rate
    dt = cfg.dt

    pcols, pkinds = _physics_columns(scene)
    hcols, hkinds = _haptic_columns(finger_names)
    physics = Table(pcols, pkinds)
    contacts_t = Table(*zip(*CONTACT_COLUMNS))
    events_t = Table(*zip(*EVENT_COLUMNS))
    haptics = Table(hcols, hkinds)
    header = {
        "generator": f"hapticsim {__version__}",
        "scenario": cfg.name,
        "config_digest": config_digest(cfg),
        "config": config_to_dict(cfg),
        "physics_rate_hz": 1.0 / dt,
        "haptics_rate_hz": rate,
        "platform": platform_tag(),
        "release_time": release_at,
        # hand dimensions are modelling assumptions rather than measured values
        "assumed_hand_parameters": {
            f.name: {"tip_radius": f.tip_radius, "proximal_radius": f.proximal_radius, "phalange_mass": f.phalange_mass}
            for f in cfg.hand.fingers
        },
    }

    rules = _Rules(cfg, scene, world)
    names = scene.names
    prev_states: dict[str, FingertipContactState | None] = {f: None for f in finger_names}
    # aperture offset of the scripted release and responder
    t1 = None
    response_start = None
    pinch_hist: list[float] = []
    time_hist: list[float] = []
    outcome = None
    step_times = []
    max_ticks = int(round(cfg.timeout / dt))

    def offset(t: float) -> float:
        if task.kind != "slide_regrasp":
            return 0.0
        out = 0.5 * task.release_width * _ramp(t, release_at, task.release_duration)
        if response_start is not None:
            out -= 0.5 * task.response_width * _ramp(t, response_start, task.response_duration)
        return out

    def targets_at(t: float) -> dict[int, TrackedPose]:
        poses = {}
        off = offset(t)
        # finite-difference velocity of the offset over the step ending at t
        off_v = (off - offset(t - dt)) / dt
        for f in hand.fingers:
            p, v = traj.base(f.name, t)
            pad = traj.pads[f.name]
            p = p - off * pad
            v = v - off_v * pad
            tip = TrackedPose(p, linear_velocity=v)
            for body_id, pose in zip(f.phalanges, phalange_targets(tip, scene.axes[f.name], scene.geometry[f.name])):
                poses[body_id] = pose
        return poses

    def make_trace(m: RunMetrics | None) -> Trace:
        return Trace(dict(header), physics, contacts_t, events_t, haptics, m)

    for k in range(1, max_ticks + 1):
        t = k * dt
        poses = targets_at(t)
        springs = apply_coupling(world, hand, poses)
        started = _time.perf_counter()
        try:
            world, diag = step(world, couplings=springs)
        except SimulationError as exc:
            m = rules.finish(Outcome.TIMEOUT, t - dt, pinch_hist, t1, None, aborted=str(exc))
            raise RunAborted(str(exc), make_trace(m)) from exc
        step_times.append(_time.perf_counter() - started)

        states = {f: fingertip_state(world, hand, f, diag.contacts, poses[hand.finger(f).tip]) for f in finger_names}
        pinch_t = tracked_pinch_distance(hand, poses) if len(finger_names) >= 2 and _has_pinch(hand) else 0.0
        pinch_s = pinch_distance(world, hand) if _has_pinch(hand) else 0.0
        grip = sum(s.normal_force for s in states.values())
        pinch_hist.append(pinch_t)
        time_hist.append(t)

        # T1 online, with the same rule the trace detector uses
        obj = world.bodies[scene.object_id]
        tip_vz = [world.bodies[hand.finger(f).tip].linear_velocity[2] for f in finger_names]
        touching = [states[f].contacted_body == scene.object_id for f in finger_names]
        rules.touch_hist.append(any(touching))
        if (
            task.kind == "slide_regrasp"
            and t1 is None
            and t >= task.settle_time - 1e-12
            and slipping(obj.linear_velocity[2], tip_vz, touching, task.slip_speed)
        ):
            t1 = t
            if task.response_delay >= 0:
                # the responder's first closing tick is t1 + delay
                response_start = t1 + task.response_delay - dt
        status = rules.peg(world) if task.kind == "peg_in_hole" else ""

        # trace rows
        row = [k, t]
        for b in world.bodies:
            if b.is_static:
                continue
            row += [*b.position, *b.orientation, *b.linear_velocity, *b.angular_velocity]
        for f in hand.fingers:
            s = states[f.name]
            tgt = poses[f.tip].position
            row += [*tgt, s.penetration, s.normal_force, s.tangential_speed, s.approach_speed]
            row += [_STATE_NAMES[s.friction_state], -1 if s.contacted_body is None else s.contacted_body]
        row += [
            pinch_t,
            pinch_s,
            grip,
            diag.contact_count,
            diag.solver_residual,
            diag.solver_sweeps,
            diag.kinetic_energy_free,
            diag.kinetic_energy_solved,
            _joint_error(world),
            status.value if status else "",
        ]
        physics.append(row)
        for imp in diag.impulses:
            c = imp.contact
            contacts_t.append(
                (
                    k,
                    t,
                    names[c.body_a],
                    names[c.body_b],
                    *c.point,
                    *c.normal,
                    c.penetration_depth,
                    c.gap,
                    imp.normal_impulse,
                    float(imp.tangential_impulse[0]),
                    float(imp.tangential_impulse[1]),
                    imp.mu,
                    c.tangential_speed,
                    c.normal_velocity,
                    _STATE_NAMES[c.friction_state],
                )
            )

        # haptics
        batch = []
        for f in finger_names:
            tip = hand.finger(f).tip
            trans = [e for e in diag.friction_events if tip in (e.body_a, e.body_b)]
            evs = tick_events(f, t, prev_states[f], states[f], trans, amp_map)
            batch.extend(evs)
            prev_states[f] = states[f]
        for e in diag.friction_events:
            events_t.append((k, t, "physics", _pair_name(names, e), "friction", e.slip_speed, f"{e.before.name}->{e.after.name}"))
        for ev in batch:
            kind = type(ev.kind).__name__
            if kind == "StateUpdate":
                continue
            detail = f"{ev.kind.before.name}->{ev.kind.after.name}" if kind == "StickSlipTransition" else ""
            events_t.append((k, t, "haptics", ev.finger, kind, ev.kind.amplitude, detail))
        synth = ingest(batch, synth)
        times = sample_times(t, t + dt, rate)
        if len(times):
            block = render_times(synth, times)
            for i, ts in enumerate(times):
                hrow = [int(round(ts * rate)), float(ts)]
                for f in finger_names:
                    force = float(block[f][i])
                    cmd = min(float(apply_threshold(actuator, force)), actuator.max_force)
                    current, _ = force_to_current(actuator, cmd, quantize=cfg.actuator.quantize)
                    hrow += [force, current]
                haptics.append(hrow)

        outcome = rules.update(world, t, grip, t1, pinch_hist, time_hist)
        if progress is not None:
            progress(k, t)
        if outcome is not None:
            break
    else:
        outcome = Outcome.TIMEOUT

    t_end = time_hist[-1] if time_hist else 0.0
    metrics = rules.finish(outcome, t_end, pinch_hist, t1, time_hist)
    metrics.total_grip_force = physics.column("grip_force_total")
    return RunResult(make_trace(metrics), metrics, step_times, scene)


def _has_pinch(hand: HandModel) -> bool:
    names = {f.name for f in hand.fingers}
    return {"thumb", "index"} <= names


def _pair_name(names, e) -> str:
    return f"{names[e.body_a]}|{names[e.body_b]}"


def _joint_error(world: WorldState) -> float:
    worst = 0.0
    for j in world.joints:
        pa, pb = j.world_anchors(world.bodies)
        worst = max(worst, float(np.linalg.norm(pa - pb)))
    return worst


class _Rules:
    """Per-tick task rules; ``update`` returns an outcome once one fires."""

    def __init__(self, cfg: ScenarioConfig, scene: Scene, world: WorldState):
        self.cfg = cfg
        self.task = cfg.task
        self.scene = scene
        obj = world.bodies[scene.object_id]
        self.half = np.asarray(obj.shape.half_extents) if isinstance(obj.shape, Box) else None
        self.start_center = obj.position.copy()
        self.start_bottom = self._bottom(obj)
        self.target = self.start_center + np.array([0.0, 0.0, self.task.target_height])
        self.lifted = False
        self.hold_since = None
        self.completion = None
        self.entered = False
        self.response = None
        self.notes: list[str] = []
        self.touch_hist: list[bool] = []
        t = self.task
        self.hole = Hole(tuple(t.hole_center), t.hole_size, t.hole_bottom, t.hole_thickness)

    def _bottom(self, body) -> float:
        if isinstance(body.shape, Box):
            return float(box_vertices(body.position, body.orientation, body.shape.half_extents)[:, 2].min())
        if isinstance(body.shape, Sphere):
            return float(body.position[2] - body.shape.radius)
        return -math.inf

    def peg(self, world) -> PegStatus:
        obj = world.bodies[self.scene.object_id]
        status = peg_status(obj.position, obj.orientation, self.half, self.hole, entered=self.entered)
        if status in (PegStatus.IN_HOLE, PegStatus.RIM_CONTACT):
            self.entered = True
        self.last_peg = status
        return status

    def update(self, world, t, grip, t1, pinch_hist, time_hist) -> Outcome | None:
        task = self.task
        obj = world.bodies[self.scene.object_id]
        bottom = self._bottom(obj)
        eps = 1e-12
        if grip > task.break_force_total:
            return Outcome.BREAK_FAILURE
        if bottom > self.start_bottom + task.lift_margin:
            self.lifted = True
        if task.kind == "grasp_lift":
            if self.lifted and bottom <= task.ground_height + task.drop_margin:
                return Outcome.DROP_FAILURE
            if np.linalg.norm(obj.position - self.target) <= task.target_radius:
                if self.hold_since is None:
                    self.hold_since = t
                if t - self.hold_since >= task.hold_time - eps:
                    self.completion = t
                    return Outcome.SUCCESS
            else:
                self.hold_since = None
        elif task.kind == "slide_regrasp":
            if bottom <= task.ground_height + task.drop_margin:
                return Outcome.DROP_FAILURE
            if t1 is not None and self.response is None:
                self.response = detect_grasp_response(time_hist[-2:], pinch_hist[-2:], t1, task.closure_speed)
            if self.response is not None:
                hand = self.scene.hand
                tips = [world.bodies[f.tip].linear_velocity[2] for f in hand.fingers]
                rel = abs(obj.linear_velocity[2] - sum(tips) / len(tips))
                if rel <= task.slip_speed:
                    if self.hold_since is None:
                        self.hold_since = t
                    if t - self.hold_since >= task.hold_time - eps:
                        self.completion = t
                        return Outcome.SUCCESS
                else:
                    self.hold_since = None
        else:
            if self.lifted and bottom <= task.platform_height + task.drop_margin:
                return Outcome.DROP_FAILURE
            if bottom < task.platform_height - task.drop_margin:
                return Outcome.DROP_FAILURE
            if getattr(self, "last_peg", None) == PegStatus.PASSED:
                self.completion = t
                return Outcome.SUCCESS
        return None

    def finish(self, outcome, t_end, pinch_hist, t1, time_hist, aborted: str | None = None) -> RunMetrics:
        notes = list(self.notes)
        if self.task.kind == "slide_regrasp" and time_hist:
            notes += invalid_attempt_notes(time_hist, pinch_hist, self.touch_hist, t1, self.task.closure_speed)
        if aborted:
            notes.append(f"aborted: {aborted}")
        response = None
        if t1 is not None and time_hist:
            response = detect_grasp_response(time_hist, pinch_hist, t1, self.task.closure_speed)
        return RunMetrics(
            outcome=outcome,
            pinch_distance=np.array(pinch_hist, dtype=float),
            slip_onset=t1,
            response=response,
            failure_count=1 if outcome.is_failure else 0,
            completion_time=self.completion if outcome is Outcome.SUCCESS else None,
            end_time=t_end,
            diagnostics=tuple(notes),
        )
