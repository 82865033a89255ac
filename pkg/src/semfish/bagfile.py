"""Binary descriptor-bag files.

Layout, all little-endian::

    magic       4 bytes  b"BOSF"
    version     u32      (1)
    dim         u32      descriptor dimension
    bag_count   u32
    per bag:
        label   i32      (-1 = unlabeled)
        n       u32      descriptor count
        data    n x dim float32

Descriptors are stored in 32 bits and widened to 64 bits on read.
"""

import struct

import numpy as np

from .descriptors import DescriptorBag

MAGIC = b"BOSF"
VERSION = 1
_HEAD = struct.Struct("<4sIII")
_BAG = struct.Struct("<iI")


class BagFileError(ValueError):
    pass


def encode_bags(bags, dim=None):
    bags = list(bags)
    if dim is None:
        if not bags:
            raise BagFileError("cannot infer the dimension of an empty bag list")
        dim = bags[0].descriptors.shape[1]
    parts = [_HEAD.pack(MAGIC, VERSION, dim, len(bags))]
    for bag in bags:
        x = np.asarray(bag.descriptors)
        if x.ndim != 2 or x.shape[1] != dim:
            raise BagFileError(f"bag has shape {x.shape}, expected (n, {dim})")
        label = -1 if bag.label is None else int(bag.label)
        parts.append(_BAG.pack(label, x.shape[0]))
        parts.append(x.astype("<f4").tobytes())
    return b"".join(parts)


def decode_bags(data, embedding_tag="raw"):
    if len(data) < _HEAD.size:
        raise BagFileError("file too short for a header")
    magic, version, dim, count = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise BagFileError("bad magic, not a bag file")
    if version != VERSION:
        raise BagFileError(f"unsupported bag file version {version}")
    off = _HEAD.size
    bags = []
    for i in range(count):
        if off + _BAG.size > len(data):
            raise BagFileError(f"truncated header of bag {i}")
        label, n = _BAG.unpack_from(data, off)
        off += _BAG.size
        size = 4 * n * dim
        if off + size > len(data):
            raise BagFileError(f"truncated payload of bag {i}")
        x = np.frombuffer(data, "<f4", n * dim, off).reshape(n, dim).astype(np.float64)
        off += size
        bags.append(DescriptorBag(x, None if label == -1 else label, embedding_tag))
    if off != len(data):
        raise BagFileError(f"{len(data) - off} trailing bytes after the last bag")
    return bags


def write_bags(path, bags, dim=None):
    with open(path, "wb") as fh:
        fh.write(encode_bags(bags, dim))


def read_bags(path, embedding_tag="raw"):
    with open(path, "rb") as fh:
        return decode_bags(fh.read(), embedding_tag)
