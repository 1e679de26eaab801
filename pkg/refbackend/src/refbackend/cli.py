"""Command line: ``refbackend serve`` (or ``python -m refbackend serve``)."""

from __future__ import annotations

import argparse
import sys

from . import annotations as annotations_mod
from .protocol import StubEngine
from .server import serve_http, serve_stdio


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refbackend")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="answer inference requests")
    serve.add_argument("--mode", choices=["stub", "model"], default="stub")
    serve.add_argument("--annotations", help="annotation JSON (required in stub mode)")
    serve.add_argument("--strict", action="store_true",
                       help="error on unknown images instead of answering empty")
    serve.add_argument("--verify-images",
                       help="directory whose files must cover every annotated digest")
    serve.add_argument("--face-model", dest="face_model",
                       help="YuNet ONNX weights (model mode)")
    serve.add_argument("--embed-model", dest="embed_model",
                       help="SFace ONNX weights (model mode, optional)")
    serve.add_argument("--transport", choices=["stdio", "http"], default="stdio")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8799)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.mode == "stub":
        if not args.annotations:
            print("stub mode requires --annotations", file=sys.stderr)
            return 2
        try:
            annotations = annotations_mod.load(args.annotations)
        except (OSError, ValueError) as exc:
            print(f"bad annotations: {exc}", file=sys.stderr)
            return 2
        if args.verify_images:
            missing = annotations_mod.verify_images(annotations, args.verify_images)
            if missing:
                print(f"digests without image files: {', '.join(missing)}", file=sys.stderr)
                return 2
        engine = StubEngine(annotations, strict=args.strict)
    else:
        from .modelmode import ModelEngine

        try:
            engine = ModelEngine(args.face_model, args.embed_model)
        except RuntimeError as exc:
            print(str(exc), file=sys.stderr)
            return 2

    if args.transport == "stdio":
        return serve_stdio(engine)
    return serve_http(engine, args.host, args.port)


if __name__ == "__main__":
    sys.exit(main())
