"""Operator command line: run the daemon, manage profiles, query history,
calibrate the match threshold, and train the attribute classifier.

Exit codes are a stable contract: 0 success, 2 usage or configuration
error, 3 conflict, 4 not found, 5 quality rejection.
"""

from __future__ import annotations

import argparse
import json
import math
import signal
import sys
import threading
from datetime import datetime, timezone
from pathlib import Path

from . import images
from .attributes import PatchClassifier, train_patch_classifier
from .backend import open_backend
from .config import EngineConfig, load_config, update_threshold
from .describe import IdentityRefiner, TrigramRefiner, train_default_refiner
from .errors import (
    ConfigError,
    ConflictError,
    EngineError,
    InvalidInputError,
    NotFoundError,
    QualityError,
    StorageError,
)
from .ingest import open_source
from .notify import Dispatcher
from .orchestrate import EventLog, Pipeline, prune_images, summarize_history
from .profile import ProfileStore
from .recognize import chi_square, lbp_histogram

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONFLICT = 3
EXIT_NOT_FOUND = 4
EXIT_QUALITY = 5


def _load_chips(paths: list[str]) -> list:
    chips = []
    for spec in paths:
        path = Path(spec)
        files = (
            sorted(p for p in path.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
            if path.is_dir()
            else [path]
        )
        for file in files:
            chips.append(images.rgb_to_gray(images.decode_image(file.read_bytes())))
    return chips


def _open_profile_store(config: EngineConfig) -> ProfileStore:
    return ProfileStore(config.storage.profile_root, blur_floor=config.storage.blur_floor)


def _build_backend(config: EngineConfig):
    b = config.backend
    return open_backend(
        b.kind,
        annotations=b.annotations,
        cmd=list(b.cmd),
        endpoint=b.endpoint,
        strict=b.strict,
        timeout=b.timeout_seconds,
    )


def _build_refiner(config: EngineConfig):
    if config.describe.refiner == "identity":
        return IdentityRefiner()
    if config.describe.model_path and Path(config.describe.model_path).exists():
        return TrigramRefiner.load(config.describe.model_path)
    refiner = train_default_refiner(
        tuple(camera.location_label for camera in config.cameras)
    )
    if config.describe.model_path:
        refiner.save(config.describe.model_path)
    return refiner


def _build_classifier(config: EngineConfig) -> PatchClassifier | None:
    if not config.attributes.model_path:
        return None
    classifier = PatchClassifier.load(config.attributes.model_path)
    if config.attributes.person_radius is not None:
        classifier.person_radius = config.attributes.person_radius
    return classifier


# ---------------------------------------------------------------------------
# run


def cmd_run(args) -> int:
    config = load_config(args.config)
    backend = _build_backend(config)
    if config.recognition.mode == "embedding" and "embed" not in backend.tasks:
        backend.close()
        raise ConfigError(
            "recognition.mode is 'embedding' but the backend does not offer the embed task"
        )
    store = _open_profile_store(config)
    dispatcher = Dispatcher(config.feedback) if config.feedback.recipients else None
    pipeline = Pipeline(
        locations={c.camera_id: c.location_label for c in config.cameras},
        backend=backend,
        templates_provider=store.templates,
        threshold=config.recognition.threshold,
        recognition_mode=config.recognition.mode,
        classifier=_build_classifier(config),
        refiner=_build_refiner(config),
        change_params=config.change,
        debounce=config.debounce,
        dispatcher=dispatcher,
        event_log=EventLog(config.storage.event_log_path),
        image_dir=config.storage.image_dir,
        notify_classes=config.notify_classes,
    )

    stop = threading.Event()
    pipeline_lock = threading.Lock()

    def worker(camera):
        source = open_source(camera)
        for frame in source:
            if stop.is_set():
                break
            with pipeline_lock:
                pipeline.process_frame(frame)
        for error in source.errors:
            print(f"decode error: {error.path}: {error.reason}", file=sys.stderr)

    def handle_interrupt(signum, frame):
        stop.set()

    previous = signal.signal(signal.SIGINT, handle_interrupt)
    threads = [
        threading.Thread(target=worker, args=(camera,), daemon=True)
        for camera in config.cameras
    ]
    try:
        for thread in threads:
            thread.start()
        while any(t.is_alive() for t in threads):
            for thread in threads:
                thread.join(timeout=0.1)
            if stop.is_set():
                for thread in threads:
                    thread.join(timeout=5)
                break
    finally:
        signal.signal(signal.SIGINT, previous)
        backend.close()
        prune_images(
            config.storage.image_dir,
            config.storage.retention.max_count,
            config.storage.retention.max_age_seconds,
        )
    events = EventLog(config.storage.event_log_path).read()
    print(f"processed {len(events)} events, {len(pipeline.errors)} operational errors")
    return EXIT_OK


# ---------------------------------------------------------------------------
# enroll


def cmd_enroll(args) -> int:
    config = load_config(args.config)
    store = _open_profile_store(config)
    action = args.action
    if action == "add-person":
        record = store.add_person(args.name, args.email or "", args.contact or "",
                                  _load_chips(args.chips))
        print(f"enrolled {record.name} ({record.person_id}) with {len(record.templates)} views")
        return EXIT_OK
    if action == "add-views":
        record, result = store.add_views(args.person_id, _load_chips(args.chips))
        print(
            f"{record.name}: +{result.accepted} views "
            f"({result.duplicates} duplicates, {len(result.rejected)} rejected)"
        )
        if result.warning:
            print(f"warning: {result.warning}")
        return EXIT_OK
    if action == "delete-person":
        store.delete_person(args.person_id)
        print(f"deleted {args.person_id}")
        return EXIT_OK
    if action == "summary":
        print(store.readout_summary())
        return EXIT_OK
    raise ConfigError(f"unknown enroll action {action!r}")


# ---------------------------------------------------------------------------
# history


def _parse_when(text: str | None) -> int | None:
    if text is None:
        return None
    try:
        stamp = datetime.fromisoformat(text)
    except ValueError as exc:
        raise ConfigError(f"bad time {text!r}: {exc}") from exc
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return int(stamp.timestamp() * 1000)


def cmd_history(args) -> int:
    config = load_config(args.config)
    events = EventLog(config.storage.event_log_path).read()
    summary = summarize_history(
        events, _parse_when(args.since), _parse_when(args.until), top_n=args.top
    )
    if args.json:
        print(summary.to_json())
        return EXIT_OK
    if summary.total == 0:
        print("no events")
        return EXIT_OK
    print(f"{summary.total} events")
    print("by identity:")
    for name, count in summary.identity_counts:
        print(f"  {name}: {count}")
    print("by camera:")
    for name, count in summary.camera_counts:
        print(f"  {name}: {count}")
    if summary.class_counts:
        print("by class:")
        for name, count in summary.class_counts:
            print(f"  {name}: {count}")
    print("recent:")
    for description in summary.recent_descriptions:
        print(f"  {description}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# calibrate


def _chip_histograms(directory: Path) -> dict[str, list]:
    """Per-person LBP histograms from a directory of per-person subdirectories."""
    people = {}
    for sub in sorted(p for p in directory.iterdir() if p.is_dir()):
        hists = [
            lbp_histogram(images.rgb_to_gray(images.decode_image(f.read_bytes())))
            for f in sorted(sub.iterdir())
            if f.suffix.lower() in (".png", ".jpg", ".jpeg")
        ]
        if hists:
            people[sub.name] = hists
    return people


def calibrate_distances(genuine_dir: Path, impostor_dir: Path | None):
    people = _chip_histograms(genuine_dir)
    if not people or all(len(h) < 2 for h in people.values()):
        raise ConfigError(f"no usable genuine pairs under {genuine_dir}")
    genuine, impostor = [], []
    names = sorted(people)
    for name in names:
        hists = people[name]
        for i in range(len(hists)):
            for j in range(i + 1, len(hists)):
                genuine.append(chi_square(hists[i], hists[j]))
        for other in names:
            if other <= name:
                continue
            for a in people[name]:
                for b in people[other]:
                    impostor.append(chi_square(a, b))
    if impostor_dir is not None:
        extras = _chip_histograms(impostor_dir)
        for hists in extras.values():
            for a in hists:
                for person_hists in people.values():
                    impostor.extend(chi_square(a, b) for b in person_hists)
    return genuine, impostor


def sweep_threshold(genuine: list[float], impostor: list[float]):
    """F1-maximizing threshold over the observed distance grid."""
    best_tau, best_f1 = 0.0, -1.0
    for tau in sorted(set(genuine) | set(impostor)):
        tp = sum(1 for d in genuine if d <= tau)
        fn = len(genuine) - tp
        fp = sum(1 for d in impostor if d <= tau)
        f1 = (2 * tp) / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
        if f1 > best_f1:
            best_tau, best_f1 = tau, f1
    return best_tau, best_f1


def cmd_calibrate(args) -> int:
    genuine_dir = Path(args.genuine)
    if not genuine_dir.is_dir():
        raise ConfigError(f"genuine directory not found: {genuine_dir}")
    impostor_dir = Path(args.impostor) if args.impostor else None
    if impostor_dir is not None and not impostor_dir.is_dir():
        raise ConfigError(f"impostor directory not found: {impostor_dir}")
    genuine, impostor = calibrate_distances(genuine_dir, impostor_dir)
    tau, f1 = sweep_threshold(genuine, impostor)

    degenerate = sorted(set(genuine)) == sorted(set(impostor))
    payload = {
        "genuine": {
            "count": len(genuine),
            "min": min(genuine),
            "max": max(genuine),
            "mean": sum(genuine) / len(genuine),
        },
        "impostor": {
            "count": len(impostor),
            "min": min(impostor) if impostor else math.inf,
            "max": max(impostor) if impostor else -math.inf,
            "mean": (sum(impostor) / len(impostor)) if impostor else math.nan,
        },
        "suggested_threshold": tau,
        "f1": f1,
        "degenerate": degenerate,
    }
    if args.json:
        print(json.dumps(payload))
    else:
        print(f"genuine: n={len(genuine)} min={min(genuine):.6f} max={max(genuine):.6f}")
        if impostor:
            print(f"impostor: n={len(impostor)} min={min(impostor):.6f} max={max(impostor):.6f}")
        print(f"suggested threshold: {tau:.6f} (F1={f1:.4f})")
        if degenerate:
            print("warning: genuine and impostor distributions are identical")
    if args.apply:
        if not args.config:
            raise ConfigError("--apply requires --config")
        update_threshold(args.config, tau)
        print(f"updated {args.config}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    classifier = train_patch_classifier(
        Path(args.data),
        person_radius=args.person_radius if args.person_radius else math.inf,
    )
    classifier.save(args.out)
    regions = {region: len(model) for region, model in classifier.centroids.items()}
    print(f"wrote {args.out} with centroids for {regions}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gatewatch", description="Premises threat-assessment engine"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="process configured camera sources")
    run.add_argument("--config", required=True)
    run.set_defaults(func=cmd_run)

    enroll = sub.add_parser("enroll", help="manage the personal profile")
    enroll.add_argument("action", choices=["add-person", "add-views", "delete-person", "summary"])
    enroll.add_argument("--config", required=True)
    enroll.add_argument("--name")
    enroll.add_argument("--email")
    enroll.add_argument("--contact")
    enroll.add_argument("--person-id", dest="person_id")
    enroll.add_argument("--chips", nargs="*", default=[], help="chip files or directories")
    enroll.set_defaults(func=cmd_enroll)

    history = sub.add_parser("history", help="summarize the event log")
    history.add_argument("--config", required=True)
    history.add_argument("--since")
    history.add_argument("--until")
    history.add_argument("--top", type=int, default=5)
    history.add_argument("--json", action="store_true")
    history.set_defaults(func=cmd_history)

    calibrate = sub.add_parser("calibrate", help="suggest a recognition threshold")
    calibrate.add_argument("--genuine", required=True)
    calibrate.add_argument("--impostor")
    calibrate.add_argument("--apply", action="store_true")
    calibrate.add_argument("--config")
    calibrate.add_argument("--json", action="store_true")
    calibrate.set_defaults(func=cmd_calibrate)

    train = sub.add_parser("train", help="train the attribute classifier centroids")
    train.add_argument("--data", required=True, help="directory of class subdirectories")
    train.add_argument("--out", required=True)
    train.add_argument("--person-radius", dest="person_radius", type=float)
    train.set_defaults(func=cmd_train)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "enroll":
            if args.action == "add-person" and not args.name:
                raise ConfigError("add-person requires --name")
            if args.action in ("add-views", "delete-person") and not args.person_id:
                raise ConfigError(f"{args.action} requires --person-id")
        return args.func(args)
    except ConflictError as exc:
        print(f"conflict: {exc}", file=sys.stderr)
        return EXIT_CONFLICT
    except NotFoundError as exc:
        print(f"not found: {exc}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except QualityError as exc:
        print(f"quality: {exc}", file=sys.stderr)
        for chip, reasons in exc.reasons.items():
            print(f"  {chip}: {', '.join(reasons)}", file=sys.stderr)
        return EXIT_QUALITY
    except (ConfigError, InvalidInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StorageError, EngineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
