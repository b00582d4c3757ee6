"""Shared test fixtures: toy checkpoints and an independent archive parser."""

import hashlib
import json
import struct

from forge.archive import write_archive

SUFFIXES = ("attn.weight", "mlp.weight")
SINGLETONS = ("lm_head.weight", "model.embed_tokens.weight", "model.norm.weight")


def tensor_bytes(name: str, length: int) -> bytes:
    """Deterministic distinct content for a named toy tensor."""
    out = b""
    counter = 0
    while len(out) < length:
        out += hashlib.blake2b(f"{name}:{counter}".encode(), digest_size=32).digest()
        counter += 1
    return out[:length]


def make_toy_checkpoint(path, n_layers, suffixes=SUFFIXES, singletons=SINGLETONS,
                        shape=(4, 3), dtype="f32"):
    """Write a small archive with n_layers x suffixes + singleton tensors."""
    elem = {"f32": 4, "f16": 2, "bf16": 2}[dtype]
    nbytes = shape[0] * shape[1] * elem
    tensors = {}
    for i in range(n_layers):
        for suffix in suffixes:
            name = f"model.layers.{i}.{suffix}"
            tensors[name] = (dtype, shape, tensor_bytes(name, nbytes))
    for name in singletons:
        tensors[name] = (dtype, shape, tensor_bytes(name, nbytes))
    write_archive(str(path), tensors, metadata={"origin": "toy"})
    return str(path)


def raw_read_archive(path):
    """Parse an archive with struct/json only (independent of forge.archive).

    Returns (header dict without __metadata__, metadata, data bytes).
    """
    with open(path, "rb") as fh:
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        data = fh.read()
    metadata = header.pop("__metadata__", {})
    return header, metadata, data


def raw_tensor_bytes(path, name):
    header, _meta, data = raw_read_archive(path)
    begin, end = header[name]["data_offsets"]
    return data[begin:end]


class FakeProvider:
    """In-process provider double: canned replies, recorded calls.

    Replies are handed out in order; an Exception instance in the list
    is raised instead of returned.  The config attribute mirrors the
    real client so code reading provider.config.model_id works.
    """

    def __init__(self, replies, model_id="fake-model"):
        from forge.providers import ProviderConfig

        self.replies = list(replies)
        self.calls = []
        self.config = ProviderConfig(
            name="fake", base_url="http://fake.invalid", model_id=model_id
        )

    def complete(self, messages, temperature=None, max_tokens=None):
        self.calls.append(
            {"messages": list(messages), "temperature": temperature,
             "max_tokens": max_tokens}
        )
        if not self.replies:
            raise AssertionError("FakeProvider ran out of canned replies")
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply
