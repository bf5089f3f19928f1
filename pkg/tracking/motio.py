"""MOT-challenge files and synthetic sequences.

Row layout (detections, ground truth and tracker output alike):

    frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z

Detections carry id -1; ground truth and tracks carry positive ids. A
``seqinfo.ini`` next to the ``det/`` or ``gt/`` directory supplies the sequence
name, frame rate, length and image size when present.
"""
import configparser
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError
from .geometry import BoundingBox, Detection
from .utils import config_number, read_csv_cells

DEFAULT_FRAME_RATE = 30.0
MOT_COLUMNS = 10


@dataclass
class SequenceBundle:
    name: str
    frame_count: int
    detections: dict = field(default_factory=dict)
    ground_truth: dict = None
    frame_rate: float = DEFAULT_FRAME_RATE
    image_size: tuple = None

    def frames(self):
        return range(1, self.frame_count + 1)

    def detections_at(self, frame):
        return self.detections.get(frame, [])


def _parse_int(value, what):
    number = float(value)
    if not number.is_integer():
        raise ValueError(f"{what} must be an integer, got {value!r}")
    return int(number)


def _read_mot_rows(path):
    """Yield (line_no, frame, id, box, conf) for every data line of a MOT CSV."""
    for line_no, row in read_csv_cells(path, MOT_COLUMNS):
        if len(row) < 6:
            raise InputError(f"{path}:{line_no}: expected at least 6 fields, got {len(row)}")
        try:
            frame = _parse_int(row[0], "frame")
            track_id = _parse_int(row[1], "id")
            x, y, w, h = (float(v) for v in row[2:6])
            conf = float(row[6]) if len(row) > 6 and row[6] else 1.0
        except ValueError as e:
            raise InputError(f"{path}:{line_no}: malformed numeric field ({e})")
        if not all(math.isfinite(v) for v in (x, y, w, h, conf)):
            raise InputError(f"{path}:{line_no}: non-finite value")
        if frame < 1:
            raise InputError(f"{path}:{line_no}: frame must be >= 1, got {frame}")
        if w <= 0 or h <= 0:
            raise InputError(f"{path}:{line_no}: box width and height must be positive")
        yield line_no, frame, track_id, BoundingBox(x, y, w, h), conf


def read_seqinfo(path):
    """Return the [Sequence] section of seqinfo.ini for a det/gt file, or {}."""
    seq_dir = os.path.dirname(os.path.dirname(os.path.abspath(path)))
    ini = os.path.join(seq_dir, "seqinfo.ini")
    if not os.path.exists(ini):
        return {}
    parser = configparser.ConfigParser()
    try:
        parser.read(ini, encoding="utf-8")
    except configparser.Error as e:
        raise InputError(f"{ini}: {e}")
    return dict(parser["Sequence"]) if parser.has_section("Sequence") else {}


def _seqinfo_number(path, info, key, default, kind):
    try:
        return config_number(key, info.get(key, default), kind)
    except ConfigError as e:
        ini = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(path))), "seqinfo.ini")
        raise InputError(f"{ini}: {e}")


def _bundle_shell(path, max_frame):
    info = read_seqinfo(path)
    name = info.get("name") or os.path.splitext(os.path.basename(path))[0]
    frame_count = max(max_frame, _seqinfo_number(path, info, "seqlength", 0, int))
    image_size = None
    if "imwidth" in info and "imheight" in info:
        image_size = (_seqinfo_number(path, info, "imwidth", None, int),
                      _seqinfo_number(path, info, "imheight", None, int))
    return SequenceBundle(
        name=name,
        frame_count=frame_count,
        frame_rate=_seqinfo_number(path, info, "framerate", DEFAULT_FRAME_RATE, float),
        image_size=image_size,
    )


def read_detections(path):
    rows = list(_read_mot_rows(path))
    bundle = _bundle_shell(path, max((r[1] for r in rows), default=0))
    bundle.detections = {frame: [] for frame in bundle.frames()}
    for _, frame, _, box, conf in rows:
        bundle.detections[frame].append(Detection(frame, box, conf))
    return bundle


def _read_identified(path, skip_ignored):
    rows = list(_read_mot_rows(path))
    bundle = _bundle_shell(path, max((r[1] for r in rows), default=0))
    per_frame = {frame: [] for frame in bundle.frames()}
    for line_no, frame, track_id, box, conf in rows:
        if skip_ignored and conf == 0:
            continue
        if track_id < 1:
            raise InputError(f"{path}:{line_no}: identities must be positive, got {track_id}")
        per_frame[frame].append((track_id, box))
    bundle.ground_truth = per_frame
    return bundle


def read_ground_truth(path):
    """Ground truth with positive ids; rows flagged conf=0 are ignored."""
    return _read_identified(path, skip_ignored=True)


def read_tracks(path):
    return _read_identified(path, skip_ignored=False)


def _fmt(value):
    return f"{round(value, 2):.2f}"


def _write_rows(path, lines):
    try:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.writelines(lines)
    except OSError as e:
        raise InputError(f"cannot write {path}: {e}")


def write_tracks(rows, path):
    """rows: iterable of (frame, id, box). One line per (frame, id), sorted by frame then id."""
    ordered = sorted(rows, key=lambda r: (r[0], r[1]))
    lines = [f"{frame},{track_id},{_fmt(box.x)},{_fmt(box.y)},{_fmt(box.w)},{_fmt(box.h)},1,-1,-1,-1\n"
             for frame, track_id, box in ordered]
    _write_rows(path, lines)
    return len(lines)


def write_overlays(overlays, path):
    """Per-frame box annotations for external plotting: frame,id,x,y,w,h,provenance."""
    lines = ["frame,id,x,y,w,h,provenance\n"]
    lines += [f"{frame},{track_id},{_fmt(box.x)},{_fmt(box.y)},{_fmt(box.w)},{_fmt(box.h)},{provenance}\n"
              for frame, track_id, box, provenance in overlays]
    _write_rows(path, lines)


def write_detections(bundle: SequenceBundle, path):
    lines = []
    for frame in bundle.frames():
        for det in bundle.detections_at(frame):
            b = det.box
            lines.append(f"{frame},-1,{_fmt(b.x)},{_fmt(b.y)},{_fmt(b.w)},{_fmt(b.h)},{_fmt(det.score)},-1,-1,-1\n")
    _write_rows(path, lines)


def write_ground_truth(bundle: SequenceBundle, path):
    rows = [(frame, gt_id, box) for frame in bundle.frames() for gt_id, box in bundle.ground_truth.get(frame, ())]
    write_tracks(rows, path)


def write_seqinfo(bundle: SequenceBundle, seq_dir):
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["Sequence"] = {
        "name": bundle.name,
        "frameRate": f"{bundle.frame_rate:g}",
        "seqLength": str(bundle.frame_count),
    }
    if bundle.image_size:
        parser["Sequence"]["imWidth"] = str(bundle.image_size[0])
        parser["Sequence"]["imHeight"] = str(bundle.image_size[1])
    try:
        os.makedirs(seq_dir, exist_ok=True)
        with open(os.path.join(seq_dir, "seqinfo.ini"), "w", encoding="utf-8") as f:
            parser.write(f)
    except OSError as e:
        raise InputError(f"cannot write seqinfo.ini in {seq_dir}: {e}")


def write_sequence(bundle: SequenceBundle, seq_dir):
    """MOT layout: <dir>/det/det.txt, <dir>/gt/gt.txt, <dir>/seqinfo.ini."""
    write_detections(bundle, os.path.join(seq_dir, "det", "det.txt"))
    if bundle.ground_truth is not None:
        write_ground_truth(bundle, os.path.join(seq_dir, "gt", "gt.txt"))
    write_seqinfo(bundle, seq_dir)


@dataclass(frozen=True)
class ObjectTrajectory:
    """Piecewise-linear center path; velocity switches at the given turn frames."""
    start: BoundingBox
    velocity: tuple = (0.0, 0.0)
    turns: tuple = ()
    growth: float = 1.0
    appear: int = 1
    vanish: int = None

    def visible(self, frame):
        return frame >= self.appear and (self.vanish is None or frame <= self.vanish)

    def box_at(self, frame, pan_offset=(0.0, 0.0)):
        cx, cy = self.start.center()
        vx, vy = self.velocity
        turns = dict((int(t[0]), (float(t[1]), float(t[2]))) for t in self.turns)
        for step in range(self.appear + 1, frame + 1):
            if step in turns:
                vx, vy = turns[step]
            cx, cy = cx + vx, cy + vy
        scale = self.growth ** (frame - self.appear)
        w, h = self.start.w * scale, self.start.h * scale
        return BoundingBox(cx - w / 2.0 + pan_offset[0], cy - h / 2.0 + pan_offset[1], w, h)


@dataclass(frozen=True)
class SyntheticScenario:
    objects: tuple
    frames: int = 50
    frame_width: int = 1920
    frame_height: int = 1080
    camera_pan: tuple = (0.0, 0.0)
    noise_alpha: float = 0.0
    size_sigma: float = 0.0
    miss_rate: float = 0.0
    clutter_rate: float = 0.0
    seed: int = 0
    name: str = "synthetic"
    frame_rate: float = DEFAULT_FRAME_RATE


def _rounded_box(x, y, w, h):
    return BoundingBox(round(x, 2), round(y, 2), max(round(w, 2), 1.0), max(round(h, 2), 1.0))


def generate_scenario(scenario: SyntheticScenario):
    """Ground truth from the trajectories and camera pan; detections perturbed per the noise model.

    Center noise is zero-mean Gaussian with std noise_alpha * box diagonal; sizes get
    multiplicative log-normal noise with sigma size_sigma. Boxes are rounded to 2 decimals.
    """
    rng = np.random.default_rng(scenario.seed)
    ground_truth, detections = {}, {}
    for frame in range(1, scenario.frames + 1):
        pan = (scenario.camera_pan[0] * (frame - 1), scenario.camera_pan[1] * (frame - 1))
        truth = []
        for gt_id, trajectory in enumerate(scenario.objects, 1):
            if trajectory.visible(frame):
                b = trajectory.box_at(frame, pan)
                truth.append((gt_id, _rounded_box(b.x, b.y, b.w, b.h)))
        ground_truth[frame] = truth

        frame_dets = []
        for _, box in truth:
            missed = rng.random() < scenario.miss_rate
            center_noise = rng.standard_normal(2) * scenario.noise_alpha * box.diagonal()
            size_noise = np.exp(rng.standard_normal(2) * scenario.size_sigma)
            score = rng.uniform(0.5, 1.0)
            if missed:
                continue
            cx, cy = box.center()
            w, h = box.w * size_noise[0], box.h * size_noise[1]
            cx, cy = cx + center_noise[0], cy + center_noise[1]
            frame_dets.append(Detection(frame, _rounded_box(cx - w / 2.0, cy - h / 2.0, w, h), round(score, 2)))

        for _ in truth:
            if rng.random() >= scenario.clutter_rate:
                continue
            _, template = truth[int(rng.integers(len(truth)))]
            x = rng.uniform(0.0, max(scenario.frame_width - template.w, 0.0))
            y = rng.uniform(0.0, max(scenario.frame_height - template.h, 0.0))
            frame_dets.append(Detection(frame, _rounded_box(x, y, template.w, template.h),
                                        round(rng.uniform(0.1, 0.6), 2)))
        detections[frame] = frame_dets

    return SequenceBundle(
        name=scenario.name,
        frame_count=scenario.frames,
        detections=detections,
        ground_truth=ground_truth,
        frame_rate=scenario.frame_rate,
        image_size=(scenario.frame_width, scenario.frame_height),
    )


def random_scenario(num_objects, seed, frames=50, frame_width=1920, frame_height=1080,
                    camera_pan=(4.0, 0.0), noise_alpha=0.08, size_sigma=0.03, miss_rate=0.1,
                    clutter_rate=0.0, name=None):
    """Objects with sizes spread over a 5x range, walking slowly while the camera pans."""
    rng = np.random.default_rng([seed, num_objects])
    objects = []
    for _ in range(num_objects):
        h = float(np.exp(rng.uniform(np.log(60.0), np.log(300.0))))
        w = 0.41 * h
        x = rng.uniform(50.0, max(frame_width - w - 50.0 - camera_pan[0] * frames, 60.0))
        y = rng.uniform(20.0, max(frame_height - h - 20.0, 30.0))
        velocity = (float(rng.uniform(-3.0, 3.0)), float(rng.uniform(-1.0, 1.0)))
        objects.append(ObjectTrajectory(BoundingBox(x, y, w, h), velocity))
    return SyntheticScenario(
        objects=tuple(objects),
        frames=frames,
        frame_width=frame_width,
        frame_height=frame_height,
        camera_pan=tuple(camera_pan),
        noise_alpha=noise_alpha,
        size_sigma=size_sigma,
        miss_rate=miss_rate,
        clutter_rate=clutter_rate,
        seed=seed,
        name=name or f"random-{seed}",
    )


SCENARIO_FIELDS = ("name", "frames", "frame_width", "frame_height", "frame_rate", "noise_alpha",
                   "size_sigma", "miss_rate", "clutter_rate", "seed", "random_objects", "camera.pan")
OBJECT_FIELDS = ("start", "velocity", "turns", "growth", "appear", "vanish")


def _vector(key, value, length):
    if isinstance(value, str):
        value = [v for v in value.replace(" ", "").split(",") if v]
    try:
        numbers = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected {length} comma-separated numbers, got {value!r}")
    if len(numbers) != length:
        raise ConfigError(key, f"expected {length} numbers, got {len(numbers)}")
    return tuple(numbers)


def _turns(key, value):
    """'frame:vx,vy; frame:vx,vy' or a list of [frame, vx, vy]."""
    if not isinstance(value, (str, list, tuple)):
        raise ConfigError(key, f"expected 'frame:vx,vy; ...' or a list of [frame, vx, vy], got {value!r}")
    if isinstance(value, str):
        entries = []
        for part in (p.strip() for p in value.split(";")):
            if not part:
                continue
            frame, _, velocity = part.partition(":")
            entries.append((config_number(key, frame, int),) + _vector(key, velocity, 2))
        value = entries
    return tuple(_vector(key, entry, 3) for entry in value)


def scenario_from_mapping(mapping, seed=None):
    mapping = dict(mapping or {})
    objects = {}
    general = {}
    for key, value in mapping.items():
        key = str(key)
        if key.startswith("object."):
            parts = key.split(".")
            if len(parts) != 3 or not parts[1].isdigit() or parts[2] not in OBJECT_FIELDS:
                raise ConfigError(key, "expected object.N.<start|velocity|turns|growth|appear|vanish>")
            objects.setdefault(int(parts[1]), {})[parts[2]] = value
        elif key in SCENARIO_FIELDS:
            general[key] = value
        else:
            raise ConfigError(key, "unknown scenario key")

    if seed is None:
        seed = config_number("seed", general.get("seed", 0), int)
    if seed < 0:
        raise ConfigError("seed", f"must be >= 0, got {seed}")
    pan = _vector("camera.pan", general.get("camera.pan", (0.0, 0.0)), 2)
    common = dict(
        frames=config_number("frames", general.get("frames", 50), int),
        frame_width=config_number("frame_width", general.get("frame_width", 1920), int),
        frame_height=config_number("frame_height", general.get("frame_height", 1080), int),
        noise_alpha=config_number("noise_alpha", general.get("noise_alpha", 0.0)),
        size_sigma=config_number("size_sigma", general.get("size_sigma", 0.0)),
        miss_rate=config_number("miss_rate", general.get("miss_rate", 0.0)),
        clutter_rate=config_number("clutter_rate", general.get("clutter_rate", 0.0)),
    )
    for key in ("frames", "frame_width", "frame_height"):
        if common[key] < 1:
            raise ConfigError(key, f"must be >= 1, got {common[key]}")
    for key in ("noise_alpha", "size_sigma"):
        if not 0 <= common[key] < math.inf:
            raise ConfigError(key, f"must be a finite value >= 0, got {common[key]}")
    for key in ("miss_rate", "clutter_rate"):
        if not 0 <= common[key] <= 1:
            raise ConfigError(key, f"must lie in [0, 1], got {common[key]}")

    if "random_objects" in general:
        if objects:
            raise ConfigError("random_objects", "cannot be combined with object.N entries")
        count = config_number("random_objects", general["random_objects"], int)
        if count < 1:
            raise ConfigError("random_objects", f"must be >= 1, got {count}")
        scenario = random_scenario(count, seed, camera_pan=pan,
                                   name=general.get("name"), **common)
        return scenario

    trajectories = []
    for index in sorted(objects):
        entry = objects[index]
        prefix = f"object.{index}"
        if "start" not in entry:
            raise ConfigError(f"{prefix}.start", "missing required key")
        x, y, w, h = _vector(f"{prefix}.start", entry["start"], 4)
        if w <= 0 or h <= 0:
            raise ConfigError(f"{prefix}.start", "width and height must be positive")
        vanish = entry.get("vanish")
        if vanish is not None:
            vanish = config_number(f"{prefix}.vanish", vanish, int)
        trajectories.append(ObjectTrajectory(
            start=BoundingBox(x, y, w, h),
            velocity=_vector(f"{prefix}.velocity", entry.get("velocity", (0.0, 0.0)), 2),
            turns=_turns(f"{prefix}.turns", entry.get("turns", ())),
            growth=config_number(f"{prefix}.growth", entry.get("growth", 1.0)),
            appear=config_number(f"{prefix}.appear", entry.get("appear", 1), int),
            vanish=vanish,
        ))
    if not trajectories:
        raise ConfigError("object.1.start", "scenario defines no objects")
    return SyntheticScenario(
        objects=tuple(trajectories),
        camera_pan=pan,
        seed=seed,
        name=str(general.get("name", "synthetic")),
        frame_rate=config_number("frame_rate", general.get("frame_rate", DEFAULT_FRAME_RATE)),
        **common,
    )
