"""Binary file of Fisher encodings.

Layout (little-endian)::

    magic   4 bytes  b"FENC"
    version u32
    hlen    u32      byte length of the header
    header  hlen     UTF-8 JSON: variant, model_kind, K, D, R, power, l2, count, length
    labels  count x i32   (-1 = unlabeled)
    payload count x length x f64
"""

import json
import struct

import numpy as np

from .fisher import FisherEncoding

MAGIC = b"FENC"
VERSION = 1


def write_encodings(path, encodings, labels=None):
    encodings = list(encodings)
    if not encodings:
        raise ValueError("no encodings to write")
    first = encodings[0]
    length = len(first)
    if any(len(e) != length for e in encodings):
        raise ValueError("encodings differ in length")
    if labels is None:
        labels = [None] * len(encodings)
    labels = [-1 if lab is None else int(lab) for lab in labels]
    if len(labels) != len(encodings):
        raise ValueError("need one label per encoding")
    header = {
        "variant": first.variant,
        "model_kind": first.model_kind,
        "K": first.K,
        "D": first.D,
        "R": first.R,
        "power": first.power,
        "l2": first.l2,
        "count": len(encodings),
        "length": length,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(hbytes)))
        fh.write(hbytes)
        fh.write(np.asarray(labels, dtype="<i4").tobytes())
        fh.write(np.stack([e.vector for e in encodings]).astype("<f8").tobytes())


def read_encodings(path):
    """Returns (list of FisherEncoding, labels array)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError("not an encoding file")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported encoding file version {version}")
    header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    count, length = header["count"], header["length"]
    off = 12 + hlen
    labels = np.frombuffer(data, "<i4", count, off).astype(np.int64)
    off += 4 * count
    if len(data) != off + 8 * count * length:
        raise ValueError("encoding file payload length does not match header")
    payload = np.frombuffer(data, "<f8", count * length, off).reshape(count, length)
    encs = [
        FisherEncoding(row.copy(), header["model_kind"], header["variant"], header["K"],
                       header["D"], header["R"], header["power"], header["l2"])
        for row in payload
    ]
    return encs, labels
