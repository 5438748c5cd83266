"""On-disk formats: tensor files, checkpoints, netpbm images, CSVs, datasets.

Tensor file layout (all integers little-endian)::

    b"SALT" | u16 version=1 | u8 dtype (0=float32) | u8 rank
    | rank x u32 extents | float32 payload, row-major

A checkpoint is ``b"SALC" | u16 version | u32 header length | JSON header``
followed by one tensor record per name listed in the header.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import os
import struct
import tempfile
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .data import GazeSample
from .errors import ConfigError, NumericError, ParseError, ShapeError
from .model import Network, NetworkConfig
from .tensor import KernelSet
from .train import AdamState

TENSOR_MAGIC = b"SALT"
CHECKPOINT_MAGIC = b"SALC"
FORMAT_VERSION = 1
_F32_MAX = float(np.finfo(np.float32).max)


@contextmanager
def atomic_output(path, mode: str = "wb"):
    """Write to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    kwargs = {} if "b" in mode else {"encoding": "utf-8", "newline": ""}
    try:
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- tensors ---------------------------------------------------------------

def encode_tensor(arr) -> bytes:
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or (arr.size and np.abs(arr).max() > _F32_MAX):
        raise NumericError("tensor values are not representable as finite float32")
    head = TENSOR_MAGIC + struct.pack("<HBB", FORMAT_VERSION, 0, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.astype("<f4").tobytes(order="C")


def decode_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one tensor record starting at ``offset``; returns (array, next offset)."""
    if buf[offset:offset + 4] != TENSOR_MAGIC:
        raise ParseError("missing SALT magic")
    try:
        version, dtype, rank = struct.unpack_from("<HBB", buf, offset + 4)
        if version != FORMAT_VERSION or dtype != 0:
            raise ParseError(f"unsupported tensor version {version} / dtype {dtype}")
        dims = struct.unpack_from(f"<{rank}I", buf, offset + 8)
    except struct.error as exc:
        raise ParseError(f"truncated tensor header: {exc}") from None
    start = offset + 8 + 4 * rank
    count = int(np.prod(dims, dtype=np.int64))
    end = start + 4 * count
    if end > len(buf):
        raise ParseError("truncated tensor payload")
    arr = np.frombuffer(buf, dtype="<f4", count=count, offset=start).astype(np.float64)
    return arr.reshape(dims), end


def save_tensor(path, arr) -> None:
    with atomic_output(path) as fh:
        fh.write(encode_tensor(arr))


def load_tensor(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, end = decode_tensor(buf)
    if end != len(buf):
        raise ParseError(f"{path}: trailing bytes after tensor payload")
    return arr


# -- checkpoints -----------------------------------------------------------

def config_to_dict(cfg: NetworkConfig) -> dict:
    d = asdict(cfg)
    d["encoder_blocks"] = [list(b) for b in cfg.encoder_blocks]
    d["decoder_channel_plan"] = list(cfg.decoder_channel_plan)
    return d


def config_from_dict(d: dict) -> NetworkConfig:
    d = dict(d)
    d["encoder_blocks"] = tuple(tuple(b) for b in d["encoder_blocks"])
    d["decoder_channel_plan"] = tuple(d["decoder_channel_plan"])
    return NetworkConfig(**d)


def save_checkpoint(path, net: Network, epoch: int = 0, state: AdamState | None = None,
                    loss: str = "ead") -> None:
    tensors: list[tuple[str, np.ndarray]] = []
    for name, p in net.params.items():
        tensors += [(f"{name}.weights", p.weights), (f"{name}.bias", p.bias)]
    if state is not None and state.m:
        for slot, bank in (("m", state.m), ("v", state.v)):
            for name, p in bank.items():
                tensors += [(f"adam.{slot}.{name}.weights", p.weights), (f"adam.{slot}.{name}.bias", p.bias)]
    header = {
        "format": FORMAT_VERSION,
        "config": config_to_dict(net.config),
        "epoch": int(epoch),
        "loss": loss,
        "adam": state is not None and bool(state.m),
        "adam_t": int(state.t) if state is not None else 0,
        "tensors": [n for n, _ in tensors],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with atomic_output(path) as fh:
        fh.write(CHECKPOINT_MAGIC + struct.pack("<HI", FORMAT_VERSION, len(blob)) + blob)
        for _, arr in tensors:
            fh.write(encode_tensor(arr))


def load_checkpoint(path) -> tuple[Network, dict]:
    """Returns the network and a dict with ``epoch``, ``loss`` and ``state`` (AdamState or None)."""
    buf = Path(path).read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: not a checkpoint")
    try:
        version, n = struct.unpack_from("<HI", buf, 4)
        header = json.loads(buf[10:10 + n].decode("utf-8"))
    except (struct.error, ValueError) as exc:
        raise ParseError(f"{path}: bad checkpoint header: {exc}") from None
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    offset = 10 + n
    arrays = {}
    try:
        for name in header["tensors"]:
            arrays[name], offset = decode_tensor(buf, offset)
        cfg = config_from_dict(header["config"])
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: incomplete checkpoint header: {exc}") from None
    if offset != len(buf):
        raise ParseError(f"{path}: trailing bytes after the last tensor")
    layer_names = [k[: -len(".weights")] for k in header["tensors"]
                   if k.endswith(".weights") and not k.startswith("adam.")]

    def bank(prefix):
        return {layer: KernelSet(arrays[f"{prefix}{layer}.weights"], arrays[f"{prefix}{layer}.bias"])
                for layer in layer_names}

    net = Network(cfg, bank(""))
    state = None
    if header.get("adam"):
        state = AdamState(bank("adam.m."), bank("adam.v."), header.get("adam_t", 0))
    return net, {"epoch": header["epoch"], "loss": header.get("loss", "ead"), "state": state}


# -- netpbm ----------------------------------------------------------------

def _pnm_bytes(arr, magic: bytes) -> bytes:
    arr = np.asarray(arr, dtype=np.float64)
    q = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    h, w = arr.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + q.tobytes()


def write_pgm(path, arr) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ShapeError("PGM needs a 2-D map")
    with atomic_output(path) as fh:
        fh.write(_pnm_bytes(arr, b"P5"))


def write_ppm(path, arr) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError("PPM needs an h x w x 3 image")
    with atomic_output(path) as fh:
        fh.write(_pnm_bytes(arr, b"P6"))


def decode_pnm(buf: bytes) -> np.ndarray:
    """Parse binary PGM (P5) or PPM (P6) with maxval <= 255, scaled to [0, 1]."""
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ParseError("truncated netpbm header")
        tokens.append(buf[start:pos])
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise ParseError(f"unsupported netpbm magic {magic!r}")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError("non-numeric netpbm header field") from None
    if w < 1 or h < 1 or not 1 <= maxval <= 255:
        raise ParseError(f"bad netpbm header {w}x{h} maxval {maxval}")
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise ParseError("missing whitespace after netpbm header")
    pos += 1
    channels = 3 if magic == b"P6" else 1
    n = w * h * channels
    raster = buf[pos:pos + n]
    if len(raster) != n:
        raise ParseError(f"truncated raster: expected {n} bytes, got {len(raster)}")
    arr = np.frombuffer(raster, dtype=np.uint8).astype(np.float64) / maxval
    return arr.reshape(h, w, 3) if channels == 3 else arr.reshape(h, w)


def read_pnm(path) -> np.ndarray:
    return decode_pnm(Path(path).read_bytes())


# -- CSV -------------------------------------------------------------------

def write_csv(path, header, rows) -> None:
    with atomic_output(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_fixations(path, fixations: dict[str, np.ndarray]) -> None:
    rows = [(image_id, int(r), int(c)) for image_id, pts in fixations.items() for r, c in np.asarray(pts)]
    write_csv(path, ("image_id", "row", "col"), rows)


def read_fixations(path) -> dict[str, np.ndarray]:
    out: dict[str, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["image_id", "row", "col"]:
            raise ParseError(f"{path}: expected header image_id,row,col, got {header}")
        for line in reader:
            if len(line) != 3:
                raise ParseError(f"{path}: malformed fixation record {line}")
            try:
                r, c = int(line[1]), int(line[2])
            except ValueError:
                raise ParseError(f"{path}: non-integer coordinate in {line}") from None
            if r < 0 or c < 0:
                raise ParseError(f"{path}: negative coordinate in {line}")
            out.setdefault(line[0], []).append((r, c))
    return {k: np.asarray(v, dtype=np.int64) for k, v in out.items()}


# -- datasets --------------------------------------------------------------

def save_dataset(root, samples, palette) -> None:
    """Write samples as a dataset directory (see README for the layout)."""
    root = Path(root)
    for sub in ("images", "densities", "masks"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    manifest = []
    for s in samples:
        write_ppm(root / "images" / f"{s.image_id}.ppm", s.image)
        save_tensor(root / "densities" / f"{s.image_id}.salt", s.density)
        for cls, m in sorted(s.masks.items()):
            write_pgm(root / "masks" / f"{s.image_id}_{cls}.pgm", m.astype(np.float64))
        h, w = s.density.shape
        manifest.append((s.image_id, f"images/{s.image_id}.ppm", f"densities/{s.image_id}.salt", h, w,
                         ";".join(sorted(s.masks))))
    write_csv(root / "manifest.csv", ("image_id", "image", "density", "height", "width", "classes"), manifest)
    write_csv(root / "palette.csv", ("index", "class"), list(enumerate(palette)))
    write_fixations(root / "fixations.csv", {s.image_id: s.fixations for s in samples})


def load_dataset(root) -> list[GazeSample]:
    root = Path(root)
    if not (root / "manifest.csv").is_file():
        raise FileNotFoundError(f"{root}: no manifest.csv")
    fix = read_fixations(root / "fixations.csv")
    palette = [r["class"] for r in read_csv(root / "palette.csv")]
    samples = []
    for row in read_csv(root / "manifest.csv"):
        image_id = row["image_id"]
        masks = {}
        for cls in filter(None, row["classes"].split(";")):
            if cls not in palette:
                raise ParseError(f"class {cls!r} of image {image_id} is not in the palette")
            masks[cls] = read_pnm(root / "masks" / f"{image_id}_{cls}.pgm") > 0.5
        samples.append(GazeSample(
            image=read_pnm(root / row["image"]),
            density=load_tensor(root / row["density"]),
            fixations=fix.get(image_id, np.zeros((0, 2), dtype=np.int64)),
            image_id=image_id,
            masks=masks,
        ))
    return samples


# -- config ----------------------------------------------------------------

def parse_config(text: str, allowed=None) -> dict[str, str]:
    """Flat ``key = value`` config with ``#`` comments."""
    parser = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                       interpolation=None, delimiters=("=",))
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    values = dict(parser["config"])
    if allowed is not None:
        unknown = sorted(set(values) - set(allowed))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return values


def read_config(path, allowed=None) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, allowed)


def format_config(values: dict) -> str:
    buf = io.StringIO()
    for k in sorted(values):
        buf.write(f"{k} = {values[k]}\n")
    return buf.getvalue()
