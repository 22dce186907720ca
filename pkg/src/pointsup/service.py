"""Backend for the point-labeling workbench.

Serves per-point labeling tasks in simulation order (the task coordinates
come from the same sampler as the offline simulation), records label events
to an append-only JSONL log per session, and reports live timing/agreement
statistics. Crash recovery replays the logs.

HTTP API (JSON):
    POST /sessions                {"n_points": N, "seed": S} -> session info
    GET  /sessions/{id}/next      -> task payload | {"done": true, ...}
    POST /sessions/{id}/labels    {"task_id", "label", "elapsed_ms"} -> ack
    GET  /sessions/{id}/stats     -> {"labeled", "total", "mean_s_per_point", "agreement"}
    GET  /sessions/{id}/export    -> point-annotation JSON (simulation schema)
    GET  /images/{file}           -> PNG from the dataset root
"""

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .masks import bbox_from_mask
from .simulate import (
    LabeledPoint,
    PointAnnotation,
    PointCollection,
    collection_agreement,
    dump_points,
    instance_rng,
    sample_uniform_points,
)

DATA_DIR_ENV = "POINTSUP_DATA_DIR"

CONTEXT_MARGIN = 0.2  # box expansion per side for the whole-object view
ZOOM_MIN_SIDE = 64.0  # px
ZOOM_DIAG_FRACTION = 0.1
ZOOM_SCALE = 4
MARKER_HIGHLIGHT_PX = 24
MARKER_RADIUS_PX = 6

LABELS = ("background", "object")


class ServiceError(Exception):
    def __init__(self, status, message, **extra):
        super().__init__(message)
        self.status = status
        self.payload = {"error": message, **extra}


def _clamp_rect(x, y, w, h, img_w, img_h):
    x0, y0 = max(x, 0.0), max(y, 0.0)
    x1, y1 = min(x + w, float(img_w)), min(y + h, float(img_h))
    return {"x": x0, "y": y0, "w": max(x1 - x0, 0.0), "h": max(y1 - y0, 0.0)}


def view_geometry(img_w, img_h, bbox, point):
    """Crop rectangles for the two annotation views plus marker styling.

    Context: the box expanded 20% per side, clamped to the image. Zoom: a
    square window of side max(64, 0.1 * box diagonal) centered on the point,
    shifted (never cropped) to stay inside the image, displayed at 4x.
    """
    px, py = point
    ctx = _clamp_rect(
        bbox.x - CONTEXT_MARGIN * bbox.w,
        bbox.y - CONTEXT_MARGIN * bbox.h,
        (1 + 2 * CONTEXT_MARGIN) * bbox.w,
        (1 + 2 * CONTEXT_MARGIN) * bbox.h,
        img_w,
        img_h,
    )
    side = max(ZOOM_MIN_SIDE, ZOOM_DIAG_FRACTION * bbox.diagonal)
    sw = min(side, float(img_w))
    sh = min(side, float(img_h))
    zx = min(max(px - sw / 2.0, 0.0), img_w - sw)
    zy = min(max(py - sh / 2.0, 0.0), img_h - sh)
    return {
        "context_view": ctx,
        "zoom_view": {"x": zx, "y": zy, "w": sw, "h": sh, "scale": ZOOM_SCALE},
        "marker": {"radius": MARKER_RADIUS_PX, "highlight_box": MARKER_HIGHLIGHT_PX},
    }


@dataclass(frozen=True)
class Task:
    task_id: int
    instance_id: int | str
    point_index: int
    x: float
    y: float


def build_task_sequence(dataset, n_points, seed):
    """Tasks in simulation order: instance by instance, point by point.

    Coordinates are exactly what the offline simulation produces for the
    same (dataset, n_points, seed); empty-mask instances are skipped.
    """
    tasks = []
    skipped = []
    for inst in dataset.instances:
        if inst.mask.count() == 0:
            skipped.append(inst.instance_id)
            continue
        bbox = bbox_from_mask(inst.mask)
        pts = sample_uniform_points(bbox, n_points, instance_rng(seed, inst.instance_id))
        for pi, (x, y) in enumerate(pts):
            tasks.append(Task(len(tasks), inst.instance_id, pi, float(x), float(y)))
    return tasks, skipped


class Session:
    """One annotator session: fixed task sequence, strictly in-order labels."""

    def __init__(self, session_id, dataset, n_points, seed, created_at, log_path):
        self.session_id = session_id
        self.dataset = dataset
        self.n_points = n_points
        self.seed = seed
        self.created_at = created_at
        self.log_path = log_path
        self.tasks, self.skipped = build_task_sequence(dataset, n_points, seed)
        self.events = []  # dicts, one per labeled task, index == task_id
        self.lock = threading.Lock()

    @property
    def cursor(self):
        return len(self.events)

    def header(self):
        return {
            "type": "session",
            "session_id": self.session_id,
            "dataset_id": self.dataset.dataset_id,
            "n_points": self.n_points,
            "seed": self.seed,
            "created_at": self.created_at,
        }

    def info(self):
        return {
            "session_id": self.session_id,
            "dataset_id": self.dataset.dataset_id,
            "n_points": self.n_points,
            "seed": self.seed,
            "total_tasks": len(self.tasks),
            "labeled": self.cursor,
        }

    def task_payload(self, task):
        inst = self.dataset.instance(task.instance_id)
        img = self.dataset.image(inst.image_id)
        return {
            "task_id": task.task_id,
            "instance_id": task.instance_id,
            "image_url": f"/images/{img.file_name}",
            "image_width": img.width,
            "image_height": img.height,
            "category": inst.category,
            "bbox": bbox_from_mask(inst.mask).as_list(),
            "point": {"x": task.x, "y": task.y},
            "view_geometry": view_geometry(
                img.width, img.height, bbox_from_mask(inst.mask), (task.x, task.y)
            ),
            "progress": {"labeled": self.cursor, "total": len(self.tasks)},
        }

    def next_task(self):
        if self.cursor >= len(self.tasks):
            return {"done": True, "progress": {"labeled": self.cursor, "total": len(self.tasks)}}
        return self.task_payload(self.tasks[self.cursor])

    def submit(self, task_id, label, elapsed_ms):
        if label not in LABELS:
            raise ServiceError(400, f"label must be one of {LABELS}")
        if not isinstance(task_id, int):
            raise ServiceError(400, "task_id must be an integer")
        if elapsed_ms is None or elapsed_ms < 0:
            raise ServiceError(400, "elapsed_ms must be >= 0")
        with self.lock:
            if task_id < self.cursor:
                prior = self.events[task_id]
                if prior["label"] == label:
                    return self._ack(duplicate=True)
                raise ServiceError(409, "task already labeled with a different label", task_id=task_id)
            if task_id > self.cursor:
                raise ServiceError(409, "tasks must be labeled in order", expected_task=self.cursor)
            if task_id >= len(self.tasks):
                raise ServiceError(409, "session is complete")
            event = {
                "type": "label",
                "task_id": task_id,
                "label": label,
                "elapsed_ms": float(elapsed_ms),
                "ts": time.time(),
            }
            self._append(event)  # durable before ack
            self.events.append(event)
            return self._ack(duplicate=False)

    def _ack(self, duplicate):
        return {
            "ok": True,
            "duplicate": duplicate,
            "progress": {"labeled": self.cursor, "total": len(self.tasks)},
            "done": self.cursor >= len(self.tasks),
        }

    def _append(self, obj):
        with open(self.log_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(obj, sort_keys=True) + "\n")
            f.flush()
            os.fsync(f.fileno())

    def stats(self):
        labeled = self.cursor
        mean_s = None
        if labeled:
            mean_s = sum(e["elapsed_ms"] for e in self.events) / labeled / 1000.0
        return {
            "labeled": labeled,
            "total": len(self.tasks),
            "mean_s_per_point": mean_s,
            "agreement": self.agreement(),
        }

    def agreement(self):
        """Against ground-truth masks, via the simulation module's measure."""
        if not self.cursor:
            return None
        return collection_agreement(self.to_collection(), self.dataset)

    def to_collection(self):
        """Labeled points as a point-annotation collection (human source)."""
        per_instance = {}
        order = []
        for ev in self.events:
            t = self.tasks[ev["task_id"]]
            if t.instance_id not in per_instance:
                per_instance[t.instance_id] = []
                order.append(t.instance_id)
            per_instance[t.instance_id].append(
                LabeledPoint(t.x, t.y, LABELS.index(ev["label"]), "human")
            )
        return PointCollection(
            n_points=self.n_points,
            seed=self.seed,
            annotations=[PointAnnotation(iid, per_instance[iid]) for iid in order],
            dataset_id=self.dataset.dataset_id,
            skipped=list(self.skipped),
        )


class AnnotationService:
    """Owns sessions and their durable logs; replays logs on construction."""

    def __init__(self, dataset, image_root, data_dir=None):
        self.dataset = dataset
        self.image_root = os.path.abspath(image_root)
        self.data_dir = os.path.abspath(data_dir or os.environ.get(DATA_DIR_ENV, "pointsup-sessions"))
        os.makedirs(self.data_dir, exist_ok=True)
        self.sessions = {}
        self._lock = threading.Lock()
        self._replay()

    def _log_path(self, session_id):
        return os.path.join(self.data_dir, f"session_{session_id}.jsonl")

    def _replay(self):
        for name in sorted(os.listdir(self.data_dir)):
            if not (name.startswith("session_") and name.endswith(".jsonl")):
                continue
            path = os.path.join(self.data_dir, name)
            with open(path, encoding="utf-8") as f:
                lines = [json.loads(line) for line in f if line.strip()]
            if not lines or lines[0].get("type") != "session":
                continue
            head = lines[0]
            if head.get("dataset_id") != self.dataset.dataset_id:
                continue  # log belongs to a different dataset
            sess = Session(
                head["session_id"],
                self.dataset,
                int(head["n_points"]),
                int(head["seed"]),
                head["created_at"],
                path,
            )
            for ev in lines[1:]:
                if ev.get("type") != "label":
                    continue
                if ev["task_id"] != sess.cursor:
                    raise ValueError(f"{path}: task {ev['task_id']} out of order in log")
                sess.events.append(ev)
            self.sessions[sess.session_id] = sess

    def create_session(self, n_points, seed, dataset_id=None):
        if dataset_id is not None and dataset_id != self.dataset.dataset_id:
            raise ServiceError(404, f"unknown dataset {dataset_id!r}")
        if n_points < 0:
            raise ServiceError(400, "n_points must be >= 0")
        with self._lock:
            session_id = uuid.uuid4().hex[:12]
            sess = Session(
                session_id,
                self.dataset,
                int(n_points),
                int(seed),
                time.time(),
                self._log_path(session_id),
            )
            sess._append(sess.header())
            self.sessions[session_id] = sess
        return sess.info()

    def session(self, session_id):
        sess = self.sessions.get(session_id)
        if sess is None:
            raise ServiceError(404, f"unknown session {session_id!r}")
        return sess


class _Handler(BaseHTTPRequestHandler):
    service: AnnotationService = None
    ui_dir: str = None

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status, payload, content_type="application/json"):
        body = payload if isinstance(payload, bytes) else (json.dumps(payload) + "\n").encode()
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def _json_body(self):
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        try:
            return json.loads(self.rfile.read(length))
        except json.JSONDecodeError as e:
            raise ServiceError(400, f"invalid JSON body: {e}") from e

    def do_OPTIONS(self):
        self._send(204, b"")

    def do_GET(self):
        self._route("GET")

    def do_POST(self):
        self._route("POST")

    def _route(self, method):
        try:
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            svc = self.service
            if method == "POST" and parts == ["sessions"]:
                body = self._json_body()
                info = svc.create_session(
                    int(body.get("n_points", 10)),
                    int(body.get("seed", 0)),
                    body.get("dataset_id"),
                )
                return self._send(201, info)
            if len(parts) == 3 and parts[0] == "sessions":
                sess = svc.session(parts[1])
                if method == "GET" and parts[2] == "next":
                    return self._send(200, sess.next_task())
                if method == "POST" and parts[2] == "labels":
                    body = self._json_body()
                    if "task_id" not in body or "label" not in body:
                        raise ServiceError(400, "label submission needs task_id and label")
                    ack = sess.submit(body["task_id"], body["label"], body.get("elapsed_ms", 0))
                    return self._send(200, ack)
                if method == "GET" and parts[2] == "stats":
                    return self._send(200, sess.stats())
                if method == "GET" and parts[2] == "export":
                    return self._send(200, dump_points(sess.to_collection()))
            if method == "GET" and len(parts) >= 2 and parts[0] == "images":
                return self._send_image("/".join(parts[1:]))
            if method == "GET" and self.ui_dir:
                return self._send_static(parts)
            raise ServiceError(404, f"no route for {method} {self.path}")
        except ServiceError as e:
            self._send(e.status, e.payload)
        except Exception as e:  # pragma: no cover - defensive
            self._send(500, {"error": f"{type(e).__name__}: {e}"})

    def _send_image(self, rel):
        root = self.service.image_root
        path = os.path.realpath(os.path.join(root, rel))
        if not path.startswith(root + os.sep) and path != root:
            raise ServiceError(403, "image path escapes the dataset root")
        if not os.path.isfile(path):
            raise ServiceError(404, f"no such image {rel!r}")
        with open(path, "rb") as f:
            self._send(200, f.read(), content_type="image/png")

    def _send_static(self, parts):
        rel = "/".join(parts) if parts else "index.html"
        root = os.path.realpath(self.ui_dir)
        path = os.path.realpath(os.path.join(root, rel))
        if not path.startswith(root + os.sep) and path != root:
            raise ServiceError(403, "path escapes the UI root")
        if os.path.isdir(path):
            path = os.path.join(path, "index.html")
        if not os.path.isfile(path):
            raise ServiceError(404, f"no such file {rel!r}")
        ctype = {
            ".html": "text/html",
            ".js": "application/javascript",
            ".css": "text/css",
            ".png": "image/png",
            ".svg": "image/svg+xml",
            ".map": "application/json",
        }.get(os.path.splitext(path)[1], "application/octet-stream")
        with open(path, "rb") as f:
            self._send(200, f.read(), content_type=ctype)


def make_server(dataset, image_root, port=0, data_dir=None, ui_dir=None):
    """ThreadingHTTPServer wired to a fresh AnnotationService."""
    service = AnnotationService(dataset, image_root, data_dir)
    handler = type("Handler", (_Handler,), {"service": service, "ui_dir": ui_dir})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    server.service = service
    return server
