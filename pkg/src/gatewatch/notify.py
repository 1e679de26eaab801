"""Feedback composition and dispatch: MMS, alert, email, phone call.

MMS and alert messages go to carrier email gateways
(``{number}@{gateway}``) as MIME multiparts with the scene image
attached; alert mode adds high-priority headers. Phone calls POST a
``{"to", "script_text"}`` payload to the configured provider endpoint.
The file-sink transport writes every message into an outbox directory so
tests and dry runs need no network. Delivery failures retry up to three
times with 1 s, 2 s, 4 s backoff and are reported as results, never
raised into the pipeline.
"""

from __future__ import annotations

import json
import os
import re
import smtplib
import time
from dataclasses import dataclass, field
from email.message import EmailMessage
from email.policy import SMTP
from email.utils import formatdate
from pathlib import Path
from typing import Callable, Sequence

import requests

from . import images
from .errors import ConfigError, InvalidInputError

MODES = ("mms", "alert", "email", "call")
DEFAULT_ATTACHMENT_CAP = 1 << 20  # 1 MiB
RETRY_BACKOFF = (1.0, 2.0, 4.0)
FIXED_BOUNDARY_PREFIX = "=-gatewatch-boundary-"


def normalize_phone(number: str) -> str:
    return re.sub(r"\D", "", number or "")


@dataclass(frozen=True)
class Recipient:
    name: str
    email: str = ""
    phone_number: str = ""
    carrier_gateway_domain: str = ""

    def __post_init__(self):
        object.__setattr__(self, "phone_number", normalize_phone(self.phone_number))


@dataclass(frozen=True)
class SmtpConfig:
    host: str = "localhost"
    port: int = 25
    sender: str = "gatewatch@localhost"
    starttls: bool = False
    user_env: str = ""
    password_env: str = ""


@dataclass(frozen=True)
class CallProviderConfig:
    endpoint: str = ""
    auth_env: str = ""


@dataclass(frozen=True)
class FeedbackConfig:
    modes: tuple[str, ...] = ("mms",)
    recipients: tuple[Recipient, ...] = ()
    smtp: SmtpConfig = SmtpConfig()
    call_provider: CallProviderConfig = CallProviderConfig()
    transport: str = "file-sink"
    outbox_dir: str = "outbox"
    attachment_cap: int = DEFAULT_ATTACHMENT_CAP

    def __post_init__(self):
        for mode in self.modes:
            if mode not in MODES:
                raise ConfigError(f"unknown feedback mode {mode!r}")
        if "call" in self.modes and self.transport == "real" and not self.call_provider.endpoint:
            raise ConfigError("call mode requires a provider endpoint")


@dataclass(frozen=True)
class Notification:
    event_ref: str
    mode: str
    recipient: Recipient
    subject: str
    body: str
    attachment: bytes | None = None
    attachment_type: str = "image/png"

    def __post_init__(self):
        if not self.body:
            raise InvalidInputError("notification body must be non-empty")


@dataclass
class DeliveryResult:
    event_ref: str
    mode: str
    recipient: str
    ok: bool
    attempts: int
    error: str | None = None


def shrink_attachment(png_bytes: bytes, cap: int) -> bytes:
    """Downscale a PNG by halving its sides until it fits under the cap."""
    while len(png_bytes) > cap:
        raster = images.decode_image(png_bytes)
        h, w = raster.shape[0], raster.shape[1]
        if min(h, w) < 16:
            break
        png_bytes = images.encode_png(images.resample_nearest(raster, h // 2, w // 2))
    return png_bytes


def _gateway_address(recipient: Recipient) -> str:
    if not recipient.phone_number or not recipient.carrier_gateway_domain:
        raise ConfigError(
            f"recipient {recipient.name!r} needs phone_number and carrier_gateway_domain"
        )
    return f"{recipient.phone_number}@{recipient.carrier_gateway_domain}"


def _compose_mime(
    notification: Notification,
    to_address: str,
    sender: str,
    date_ms: int,
    boundary_seed: str,
    extra_headers: Sequence[tuple[str, str]] = (),
) -> bytes:
    message = EmailMessage(policy=SMTP)
    message["From"] = sender
    message["To"] = to_address
    message["Subject"] = notification.subject
    message["Date"] = formatdate(date_ms / 1000, usegmt=True)
    for name, value in extra_headers:
        message[name] = value
    message.set_content(notification.body)
    if notification.attachment is not None:
        maintype, _, subtype = notification.attachment_type.partition("/")
        message.add_attachment(
            notification.attachment,
            maintype=maintype,
            subtype=subtype or "octet-stream",
            filename="scene.png",
        )
        message.set_boundary(FIXED_BOUNDARY_PREFIX + boundary_seed)
    return message.as_bytes()


def compose_mms(
    notification: Notification,
    sender: str,
    date_ms: int,
    boundary_seed: str = "0",
) -> bytes:
    """RFC-5322 bytes for a carrier-gateway MMS; deterministic given
    the injected date and boundary seed."""
    return _compose_mime(
        notification, _gateway_address(notification.recipient), sender, date_ms, boundary_seed
    )


def compose_alert(
    notification: Notification, sender: str, date_ms: int, boundary_seed: str = "0"
) -> bytes:
    headers = (("Importance", "high"), ("X-Priority", "1"))
    return _compose_mime(
        notification,
        _gateway_address(notification.recipient),
        sender,
        date_ms,
        boundary_seed,
        headers,
    )


def compose_email(
    notification: Notification, sender: str, date_ms: int, boundary_seed: str = "0"
) -> bytes:
    if not notification.recipient.email:
        raise ConfigError(f"recipient {notification.recipient.name!r} has no email address")
    return _compose_mime(
        notification, notification.recipient.email, sender, date_ms, boundary_seed
    )


def humanize_time(timestamp_ms: int) -> str:
    return time.strftime("%B %d, %Y at %H:%M UTC", time.gmtime(timestamp_ms / 1000))


def compose_call_script(description: str, timestamp_ms: int) -> str:
    """Spoken-alert text for the call provider."""
    return f"Alert. {description}. Recorded at {humanize_time(timestamp_ms)}."


# ---------------------------------------------------------------------------
# Transports.


class FileSinkTransport:
    """Writes each message into the outbox directory; always succeeds."""

    def __init__(self, outbox_dir: str | Path):
        self.outbox = Path(outbox_dir)
        self.outbox.mkdir(parents=True, exist_ok=True)
        self._seq = 0

    def send_message(self, notification: Notification, message_bytes: bytes):
        self._seq += 1
        slug = re.sub(r"[^a-z0-9]+", "-", notification.recipient.name.lower()).strip("-")
        path = self.outbox / f"{self._seq:04d}-{notification.mode}-{slug or 'recipient'}.eml"
        path.write_bytes(message_bytes)

    def send_call(self, notification: Notification, payload: dict):
        self._seq += 1
        slug = re.sub(r"[^a-z0-9]+", "-", notification.recipient.name.lower()).strip("-")
        path = self.outbox / f"{self._seq:04d}-call-{slug or 'recipient'}.json"
        path.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


class RealTransport:
    """SMTP for message modes, provider POST for calls.

    Credentials come from the environment variables named in the config;
    they are never stored in configuration files.
    """

    def __init__(self, smtp: SmtpConfig, call_provider: CallProviderConfig,
                 timeout: float = 10.0):
        self.smtp = smtp
        self.call_provider = call_provider
        self.timeout = timeout

    def send_message(self, notification: Notification, message_bytes: bytes):
        with smtplib.SMTP(self.smtp.host, self.smtp.port, timeout=self.timeout) as client:
            if self.smtp.starttls:
                client.starttls()
            user = os.environ.get(self.smtp.user_env, "") if self.smtp.user_env else ""
            password = (
                os.environ.get(self.smtp.password_env, "") if self.smtp.password_env else ""
            )
            if user:
                client.login(user, password)
            to_address = _recipient_address(notification)
            client.sendmail(self.smtp.sender, [to_address], message_bytes)

    def send_call(self, notification: Notification, payload: dict):
        headers = {}
        if self.call_provider.auth_env:
            token = os.environ.get(self.call_provider.auth_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        response = requests.post(
            self.call_provider.endpoint, json=payload, headers=headers, timeout=self.timeout
        )
        response.raise_for_status()


def _recipient_address(notification: Notification) -> str:
    if notification.mode == "email":
        return notification.recipient.email
    return _gateway_address(notification.recipient)


# ---------------------------------------------------------------------------
# Dispatch with retry.


class Dispatcher:
    """Composes and delivers notifications for threat events."""

    def __init__(
        self,
        config: FeedbackConfig,
        transport=None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.time,
    ):
        self.config = config
        self.sleep = sleep
        self.clock = clock
        if transport is not None:
            self.transport = transport
        elif config.transport == "file-sink":
            self.transport = FileSinkTransport(config.outbox_dir)
        else:
            self.transport = RealTransport(config.smtp, config.call_provider)

    def build_notifications(
        self, event_ref: str, description: str, image_png: bytes | None
    ) -> list[Notification]:
        attachment = None
        if image_png is not None:
            attachment = shrink_attachment(image_png, self.config.attachment_cap)
        subject = f"Premises alert: {description[:60]}"
        out = []
        for mode in self.config.modes:
            for recipient in self.config.recipients:
                out.append(
                    Notification(
                        event_ref=event_ref,
                        mode=mode,
                        recipient=recipient,
                        subject=subject,
                        body=description,
                        attachment=None if mode == "call" else attachment,
                    )
                )
        return out

    def _deliver_once(self, notification: Notification, timestamp_ms: int):
        mode = notification.mode
        if mode == "call":
            payload = {
                "to": notification.recipient.phone_number,
                "script_text": compose_call_script(notification.body, timestamp_ms),
            }
            self.transport.send_call(notification, payload)
            return
        composer = {"mms": compose_mms, "alert": compose_alert, "email": compose_email}[mode]
        message = composer(
            notification, self.config.smtp.sender, timestamp_ms, notification.event_ref
        )
        self.transport.send_message(notification, message)

    def dispatch(self, notification: Notification, timestamp_ms: int) -> DeliveryResult:
        """Deliver one notification: an initial attempt plus up to three
        retries backed off 1 s, 2 s, 4 s. Failures become results."""
        attempts = 0
        error = None
        for backoff in (None, *RETRY_BACKOFF):
            if backoff is not None:
                self.sleep(backoff)
            attempts += 1
            try:
                self._deliver_once(notification, timestamp_ms)
                return DeliveryResult(
                    notification.event_ref, notification.mode,
                    notification.recipient.name, True, attempts,
                )
            except ConfigError:
                raise
            except Exception as exc:  # transport failures must never escape
                error = str(exc)
        return DeliveryResult(
            notification.event_ref, notification.mode,
            notification.recipient.name, False, attempts, error,
        )

    def notify_event(
        self, event_ref: str, description: str, timestamp_ms: int, image_png: bytes | None
    ) -> list[DeliveryResult]:
        results = []
        for notification in self.build_notifications(event_ref, description, image_png):
            try:
                results.append(self.dispatch(notification, timestamp_ms))
            except ConfigError as exc:
                results.append(
                    DeliveryResult(
                        event_ref, notification.mode, notification.recipient.name,
                        False, 0, f"config: {exc}",
                    )
                )
        return results
