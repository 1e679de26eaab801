"""Engine configuration: one JSON file, validated with field diagnostics.

Relative paths are resolved against the config file's directory. Secrets
never live in the file; SMTP and call-provider credentials are named
environment variables (``user_env``, ``password_env``, ``auth_env``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .ingest import CameraConfig, ChangeParams
from .notify import (
    CallProviderConfig,
    DEFAULT_ATTACHMENT_CAP,
    FeedbackConfig,
    Recipient,
    SmtpConfig,
)
from .orchestrate import DebouncePolicy
from .profile import DEFAULT_BLUR_FLOOR

BACKEND_KINDS = ("stub", "subprocess", "http")
RECOGNITION_MODES = ("lbp", "embedding")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "stub"
    annotations: str | None = None
    strict: bool = False
    cmd: tuple[str, ...] = ()
    endpoint: str = ""
    timeout_seconds: float = 5.0


@dataclass(frozen=True)
class RecognitionConfig:
    mode: str = "lbp"
    threshold: float = 3.0


@dataclass(frozen=True)
class AttributesConfig:
    model_path: str | None = None
    person_radius: float | None = None


@dataclass(frozen=True)
class DescribeConfig:
    refiner: str = "identity"  # identity | trigram
    model_path: str | None = None


@dataclass(frozen=True)
class RetentionConfig:
    max_count: int | None = None
    max_age_seconds: float | None = None


@dataclass(frozen=True)
class StorageConfig:
    profile_root: str = "profiles"
    event_log_path: str = "events.jsonl"
    image_dir: str = "scene-images"
    retention: RetentionConfig = RetentionConfig()
    blur_floor: float = DEFAULT_BLUR_FLOOR


@dataclass(frozen=True)
class EngineConfig:
    cameras: tuple[CameraConfig, ...]
    backend: BackendConfig
    recognition: RecognitionConfig
    change: ChangeParams
    debounce: DebouncePolicy
    feedback: FeedbackConfig
    storage: StorageConfig
    attributes: AttributesConfig = AttributesConfig()
    describe: DescribeConfig = DescribeConfig()
    notify_classes: tuple[str, ...] | None = None


def _require(payload: dict, key: str, kind, where: str):
    if key not in payload:
        raise ConfigError("missing required field", field=f"{where}.{key}")
    value = payload[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(
            f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}",
            field=f"{where}.{key}",
        )
    return value


def _resolve(base: Path, value: str | None) -> str | None:
    if value is None:
        return None
    path = Path(value)
    return str(path if path.is_absolute() else base / path)


def _parse_cameras(items, base: Path) -> tuple[CameraConfig, ...]:
    if not isinstance(items, list) or not items:
        raise ConfigError("at least one camera is required", field="cameras")
    cameras = []
    seen = set()
    for i, item in enumerate(items):
        where = f"cameras[{i}]"
        camera_id = _require(item, "camera_id", str, where)
        if camera_id in seen:
            raise ConfigError(f"duplicate camera_id {camera_id!r}", field=where)
        seen.add(camera_id)
        cameras.append(
            CameraConfig(
                camera_id=camera_id,
                location_label=_require(item, "location_label", str, where),
                source=_resolve(base, _require(item, "source", str, where)),
            )
        )
    return tuple(cameras)


def _parse_backend(payload: dict, base: Path) -> BackendConfig:
    kind = payload.get("kind", "stub")
    if kind not in BACKEND_KINDS:
        raise ConfigError(f"kind must be one of {BACKEND_KINDS}", field="backend.kind")
    cfg = BackendConfig(
        kind=kind,
        annotations=_resolve(base, payload.get("annotations")),
        strict=bool(payload.get("strict", False)),
        cmd=tuple(payload.get("cmd", ())),
        endpoint=payload.get("endpoint", ""),
        timeout_seconds=float(payload.get("timeout_seconds", 5.0)),
    )
    if kind == "stub" and not cfg.annotations:
        raise ConfigError("stub backend needs annotations", field="backend.annotations")
    if kind == "subprocess" and not cfg.cmd:
        raise ConfigError("subprocess backend needs cmd", field="backend.cmd")
    if kind == "http" and not cfg.endpoint:
        raise ConfigError("http backend needs endpoint", field="backend.endpoint")
    return cfg


def _parse_feedback(payload: dict, base: Path) -> FeedbackConfig:
    recipients = []
    for i, item in enumerate(payload.get("recipients", [])):
        recipients.append(
            Recipient(
                name=_require(item, "name", str, f"feedback.recipients[{i}]"),
                email=item.get("email", ""),
                phone_number=item.get("phone_number", ""),
                carrier_gateway_domain=item.get("carrier_gateway_domain", ""),
            )
        )
    smtp = payload.get("smtp", {})
    call = payload.get("call_provider", {})
    transport = payload.get("transport", "file-sink")
    if transport not in ("real", "file-sink"):
        raise ConfigError("transport must be 'real' or 'file-sink'", field="feedback.transport")
    try:
        return FeedbackConfig(
            modes=tuple(payload.get("modes", ("mms",))),
            recipients=tuple(recipients),
            smtp=SmtpConfig(
                host=smtp.get("host", "localhost"),
                port=int(smtp.get("port", 25)),
                sender=smtp.get("sender", "gatewatch@localhost"),
                starttls=bool(smtp.get("starttls", False)),
                user_env=smtp.get("user_env", ""),
                password_env=smtp.get("password_env", ""),
            ),
            call_provider=CallProviderConfig(
                endpoint=call.get("endpoint", ""), auth_env=call.get("auth_env", "")
            ),
            transport=transport,
            outbox_dir=_resolve(base, payload.get("outbox_dir", "outbox")),
            attachment_cap=int(payload.get("attachment_cap", DEFAULT_ATTACHMENT_CAP)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field="feedback") from exc


def parse_config(payload: dict, base: Path) -> EngineConfig:
    try:
        cameras = _parse_cameras(payload.get("cameras"), base)
        backend = _parse_backend(payload.get("backend", {}), base)

        recognition = payload.get("recognition", {})
        mode = recognition.get("mode", "lbp")
        if mode not in RECOGNITION_MODES:
            raise ConfigError(
                f"mode must be one of {RECOGNITION_MODES}", field="recognition.mode"
            )
        threshold = float(recognition.get("threshold", 3.0))
        if threshold <= 0:
            raise ConfigError("threshold must be > 0", field="recognition.threshold")

        change = payload.get("change", {})
        change_params = ChangeParams(
            pixel_delta=int(change.get("pixel_delta", 25)),
            active_fraction=float(change.get("active_fraction", 0.01)),
        )

        debounce = DebouncePolicy(
            cooldown_seconds=float(payload.get("debounce", {}).get("cooldown_seconds", 60))
        )

        attributes_payload = payload.get("attributes", {})
        attributes = AttributesConfig(
            model_path=_resolve(base, attributes_payload.get("model_path")),
            person_radius=(
                float(attributes_payload["person_radius"])
                if "person_radius" in attributes_payload
                else None
            ),
        )

        describe_payload = payload.get("describe", {})
        refiner = describe_payload.get("refiner", "identity")
        if refiner not in ("identity", "trigram"):
            raise ConfigError("refiner must be 'identity' or 'trigram'", field="describe.refiner")
        describe = DescribeConfig(
            refiner=refiner, model_path=_resolve(base, describe_payload.get("model_path"))
        )

        storage_payload = payload.get("storage", {})
        retention_payload = storage_payload.get("retention", {})
        storage = StorageConfig(
            profile_root=_resolve(base, storage_payload.get("profile_root", "profiles")),
            event_log_path=_resolve(base, storage_payload.get("event_log_path", "events.jsonl")),
            image_dir=_resolve(base, storage_payload.get("image_dir", "scene-images")),
            retention=RetentionConfig(
                max_count=retention_payload.get("max_count"),
                max_age_seconds=retention_payload.get("max_age_seconds"),
            ),
            blur_floor=float(storage_payload.get("blur_floor", DEFAULT_BLUR_FLOOR)),
        )

        notify_classes = payload.get("notify_classes")
        feedback = _parse_feedback(payload.get("feedback", {}), base)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    return EngineConfig(
        cameras=cameras,
        backend=backend,
        recognition=RecognitionConfig(mode=mode, threshold=threshold),
        change=change_params,
        debounce=debounce,
        feedback=feedback,
        storage=storage,
        attributes=attributes,
        describe=describe,
        notify_classes=tuple(notify_classes) if notify_classes else None,
    )


def load_config(path: str | Path) -> EngineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON (line {exc.lineno}): {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_config(payload, path.resolve().parent)


def update_threshold(path: str | Path, threshold: float):
    """Rewrite recognition.threshold in place, atomically."""
    path = Path(path)
    payload = json.loads(path.read_text(encoding="utf-8"))
    payload.setdefault("recognition", {})["threshold"] = threshold
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    tmp.replace(path)
