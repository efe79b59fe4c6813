"""Minimal HTTP inference service: POST /classify, GET /health.

Model and embeddings are loaded once at startup and never mutated, so the
threading server can answer concurrent requests safely.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .gnn import MODEL_VERSION, GnnModel, load_model
from .inference import classify_document
from .ingest import ValidationError, document_from_json
from .textembed import WordEmbeddings, load_embeddings

DEFAULT_MAX_BODY = 4 * 1024 * 1024


def _make_handler(model: GnnModel, embeddings: WordEmbeddings,
                  max_body: int):

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send_json(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path != "/health":
                self._send_json(404, {"error": "not found"})
                return
            self._send_json(200, {
                "status": "ok",
                "model_version": MODEL_VERSION,
                "n_classes": model.n_classes,
                "feature_dim": model.feature_dim,
            })

        def do_POST(self):
            if self.path != "/classify":
                self._send_json(404, {"error": "not found"})
                return
            content_type = self.headers.get("Content-Type", "")
            if not content_type.startswith("application/json"):
                self._send_json(415, {"error": "content-type must be "
                                               "application/json"})
                return
            length = int(self.headers.get("Content-Length", 0))
            if length > max_body:
                self._send_json(413, {"error": f"body exceeds "
                                               f"{max_body} bytes"})
                return
            raw = self.rfile.read(length)
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                self._send_json(400, {"error": f"bad JSON: {exc}"})
                return
            try:
                doc = document_from_json(obj, strict=True)
                result = classify_document(doc, model, embeddings)
            except (ValidationError, ValueError) as exc:
                self._send_json(400, {"error": str(exc)})
                return
            self._send_json(200, result)

    return Handler


def create_server(model: GnnModel, embeddings: WordEmbeddings,
                  host: str = "127.0.0.1", port: int = 8080,
                  max_body: int = DEFAULT_MAX_BODY) -> ThreadingHTTPServer:
    handler = _make_handler(model, embeddings, max_body)
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(model_path, embeddings_path, host: str = "127.0.0.1",
                  port: int = 8080, max_body: int = DEFAULT_MAX_BODY) -> None:
    model = load_model(model_path)
    embeddings = load_embeddings(embeddings_path)
    server = create_server(model, embeddings, host, port, max_body)
    print(f"serving on http://{host}:{server.server_address[1]} "
          f"({model.n_classes} classes, feature_dim {model.feature_dim})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
