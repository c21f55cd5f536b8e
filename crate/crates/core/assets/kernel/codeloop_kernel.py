#!/usr/bin/env python3
"""Reference interpreter kernel for codeloop.

Speaks the NDJSON protocol in PROTOCOL.md on stdin/stdout. One process holds
one persistent namespace; input images are bound to image_clue_0.. and every
figure shown with matplotlib or PIL comes back as a PNG in the result frame.

Run as `python3 -u codeloop_kernel.py`. Requires Pillow; matplotlib is only
needed if snippets use it.
"""

import base64
import contextlib
import importlib.abc
import importlib.machinery
import io
import json
import os
import sys
import traceback

PROTOCOL_VERSION = 1
BACKEND_MODULE = "_codeloop_backend"

# Figures displayed during the current exec, as (png_bytes, meta) pairs.
FIGURES = []


def _png(save):
    buf = io.BytesIO()
    save(buf)
    return buf.getvalue()


def _capture_matplotlib():
    from matplotlib import _pylab_helpers

    for manager in _pylab_helpers.Gcf.get_all_fig_managers():
        fig = manager.canvas.figure
        FIGURES.append((_png(lambda b: fig.savefig(b, format="png")), {"source": "matplotlib", "dpi": fig.dpi}))
    _pylab_helpers.Gcf.destroy_all()


class _BackendFinder(importlib.abc.MetaPathFinder, importlib.abc.Loader):
    """Supplies the matplotlib backend module on first import of pyplot."""

    def find_spec(self, name, path=None, target=None):
        if name == BACKEND_MODULE:
            return importlib.machinery.ModuleSpec(name, self)
        return None

    def create_module(self, spec):
        return None

    def exec_module(self, module):
        from matplotlib.backends.backend_agg import FigureCanvasAgg, FigureManager

        module.FigureCanvas = FigureCanvasAgg
        module.FigureManager = FigureManager
        module.show = lambda *args, **kwargs: _capture_matplotlib()


def _install_figure_hooks():
    sys.meta_path.insert(0, _BackendFinder())
    os.environ["MPLBACKEND"] = "module://" + BACKEND_MODULE


def _patch_pil_show():
    from PIL import Image

    def show(self, title=None):
        img = self if self.mode in ("RGB", "RGBA", "L", "LA", "P", "1") else self.convert("RGB")
        FIGURES.append((_png(lambda b: img.save(b, format="PNG")), {"source": "pil"}))

    Image.Image.show = show


class Kernel:
    def __init__(self, out):
        self.out = out
        self.namespace = {"__name__": "__main__", "__builtins__": __builtins__}

    def emit(self, frame):
        self.out.write(json.dumps(frame, ensure_ascii=False).encode("utf-8") + b"\n")
        self.out.flush()

    def result(self, fid, status, stdout="", error="", images=(), meta=None):
        frame = {"kind": "result", "id": fid, "status": status, "stdout": stdout, "error": error, "images": list(images)}
        if meta:
            frame["meta"] = meta
        self.emit(frame)

    def init(self, fid, images):
        from PIL import Image

        decoded = []
        for i, b64 in enumerate(images):
            try:
                img = Image.open(io.BytesIO(base64.b64decode(b64, validate=True)))
                img.load()
            except Exception as e:
                self.result(fid, "error", error="ImageDecodeError: image %d: %s" % (i, e))
                return
            decoded.append(img)
        for name in [n for n in self.namespace if n.startswith("image_clue_")]:
            del self.namespace[name]
        for i, img in enumerate(decoded):
            self.namespace["image_clue_%d" % i] = img
        self.result(fid, "ok")

    def exec(self, fid, code):
        del FIGURES[:]
        out, err = io.StringIO(), io.StringIO()
        failure = None
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            try:
                exec(compile(code, "<snippet>", "exec"), self.namespace)
            except BaseException as e:
                if isinstance(e, KeyboardInterrupt):
                    raise
                tb = e.__traceback__.tb_next if e.__traceback__ is not None else None
                failure = "".join(traceback.format_exception(type(e), e, tb))
            finally:
                with contextlib.suppress(Exception):
                    sys.stdout.flush()
        images = [base64.b64encode(png).decode("ascii") for png, _ in FIGURES]
        meta = {"figures": [m for _, m in FIGURES]} if FIGURES else None
        del FIGURES[:]
        if failure is None:
            self.result(fid, "ok", out.getvalue(), err.getvalue(), images, meta)
        else:
            self.result(fid, "error", out.getvalue(), failure + err.getvalue(), images, meta)

    def serve(self, lines):
        self.emit({"kind": "ready", "id": 0, "protocol_version": PROTOCOL_VERSION, "implementation": "python"})
        for raw in lines:
            line = raw.decode("utf-8", "replace").strip()
            if not line:
                continue
            try:
                frame = json.loads(line)
                kind, fid = frame["kind"], frame["id"]
            except Exception as e:
                self.result(0, "error", error="ProtocolError: %s" % e)
                continue
            try:
                if kind == "init":
                    self.init(fid, frame["images"])
                elif kind == "exec":
                    self.exec(fid, frame["code"])
                elif kind == "shutdown":
                    return 0
                else:
                    self.result(fid, "error", error="ProtocolError: unexpected %s frame" % kind)
            except KeyError as e:
                self.result(fid, "error", error="ProtocolError: missing field %s" % e)
        return 0


def main():
    # Keep the protocol channel private: snippets see an empty stdin, and
    # anything written to fd 1 below Python lands on stderr instead.
    proto_in = os.fdopen(os.dup(0), "rb")
    proto_out = os.fdopen(os.dup(1), "wb")
    devnull = os.open(os.devnull, os.O_RDONLY)
    os.dup2(devnull, 0)
    os.dup2(2, 1)
    sys.stdin = io.StringIO("")
    _install_figure_hooks()
    _patch_pil_show()
    sys.exit(Kernel(proto_out).serve(proto_in))


if __name__ == "__main__":
    main()
