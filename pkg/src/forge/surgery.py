"""Depth up-scaling of layered transformer checkpoints.

The transform duplicates an n-layer model, drops the last m layers of the
original and the first m of the duplicate, and concatenates the two
(n - m)-layer stacks into a 2(n - m)-layer checkpoint. Tensor bytes are
never modified, only re-addressed; non-layer tensors (embeddings, final
norm, output head) are copied once unchanged.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field

from . import __version__
from .archive import (
    StructuralError,
    TensorEntry,
    read_header,
    read_tensor,
    write_archive,
)

logger = logging.getLogger(__name__)

DEFAULT_LAYER_TEMPLATE = "model.layers.{i}.{suffix}"


def _template_regex(template: str) -> re.Pattern:
    pattern = re.escape(template)
    pattern = pattern.replace(re.escape("{i}"), r"(?P<i>\d+)")
    pattern = pattern.replace(re.escape("{suffix}"), r"(?P<suffix>.+)")
    return re.compile(f"^{pattern}$")


@dataclass
class CheckpointManifest:
    path: str
    n_layers: int
    tensor_entries: list[TensorEntry]
    metadata: dict[str, str]
    data_start: int
    layer_template: str = DEFAULT_LAYER_TEMPLATE
    # name -> entry, plus the per-layer breakdown computed at load time
    entries: dict[str, TensorEntry] = field(default_factory=dict)
    layer_suffixes: list[str] = field(default_factory=list)
    singleton_names: list[str] = field(default_factory=list)

    def layer_tensor(self, i: int, suffix: str) -> TensorEntry:
        return self.entries[self.layer_template.format(i=i, suffix=suffix)]


@dataclass(frozen=True)
class UpscalePlan:
    n: int
    m: int
    s: int
    provenance: tuple[int, ...]


def plan_upscale(n: int, m: int) -> UpscalePlan:
    """Target layout: layers [0..n-m-1] of the original followed by
    layers [m..n-1] of the duplicate, s = 2(n - m) in total."""
    if n < 1:
        raise ValueError(f"layer count must be positive, got n={n}")
    if m < 0:
        raise ValueError(f"trim count must be non-negative, got m={m}")
    if n - m < 1:
        raise ValueError(f"trim m={m} leaves no layers from n={n}")
    provenance = tuple(range(n - m)) + tuple(range(m, n))
    return UpscalePlan(n=n, m=m, s=2 * (n - m), provenance=provenance)


def load_manifest(path: str, layer_template: str = DEFAULT_LAYER_TEMPLATE) -> CheckpointManifest:
    """Read an archive and validate its layer structure.

    n is inferred as 1 + the highest layer index; every index below that
    must carry every per-layer suffix seen anywhere in the archive.
    """
    entries, metadata, data_start = read_header(path)
    rx = _template_regex(layer_template)

    by_layer: dict[int, set[str]] = {}
    suffixes: set[str] = set()
    singletons: list[str] = []
    for name in entries:
        m = rx.match(name)
        if m:
            idx = int(m.group("i"))
            by_layer.setdefault(idx, set()).add(m.group("suffix"))
            suffixes.add(m.group("suffix"))
        else:
            singletons.append(name)

    if not by_layer:
        raise StructuralError(f"{path}: no tensors match layer template {layer_template!r}")

    n = 1 + max(by_layer)
    for idx in range(n):
        present = by_layer.get(idx, set())
        missing = suffixes - present
        if missing:
            raise StructuralError(
                f"{path}: layer {idx} is missing suffixes {sorted(missing)}"
            )

    manifest = CheckpointManifest(
        path=path,
        n_layers=n,
        tensor_entries=sorted(entries.values(), key=lambda e: e.name),
        metadata=metadata,
        data_start=data_start,
        layer_template=layer_template,
        entries=entries,
        layer_suffixes=sorted(suffixes),
        singleton_names=sorted(singletons),
    )
    return manifest


def depth_upscale(
    src_path: str,
    plan: UpscalePlan,
    dst_path: str,
    layer_template: str = DEFAULT_LAYER_TEMPLATE,
) -> CheckpointManifest:
    """Write the up-scaled checkpoint to dst_path (temp file then rename)."""
    src = load_manifest(src_path, layer_template)
    if src.n_layers != plan.n:
        raise ValueError(
            f"plan was made for n={plan.n} but {src_path} has {src.n_layers} layers"
        )

    tensors: dict[str, tuple[str, tuple[int, ...], tuple[str, int, int]]] = {}
    for target in range(plan.s):
        source_layer = plan.provenance[target]
        for suffix in src.layer_suffixes:
            entry = src.layer_tensor(source_layer, suffix)
            name = layer_template.format(i=target, suffix=suffix)
            tensors[name] = (
                entry.dtype,
                entry.shape,
                (src_path, src.data_start + entry.byte_offset, entry.byte_len),
            )
    for name in src.singleton_names:
        entry = src.entries[name]
        tensors[name] = (
            entry.dtype,
            entry.shape,
            (src_path, src.data_start + entry.byte_offset, entry.byte_len),
        )

    metadata = dict(src.metadata)
    metadata.update(
        {
            "upscale.n": str(plan.n),
            "upscale.m": str(plan.m),
            "upscale.s": str(plan.s),
            "upscale.tool": f"forge {__version__}",
        }
    )
    write_archive(dst_path, tensors, metadata)
    logger.info("upscaled %s (n=%d) -> %s (s=%d)", src_path, plan.n, dst_path, plan.s)
    return load_manifest(dst_path, layer_template)


def _digest(path: str, entry: TensorEntry, data_start: int) -> str:
    return hashlib.sha256(read_tensor(path, entry, data_start)).hexdigest()


def verify_upscaled(
    src_path: str,
    dst_path: str,
    m: int,
    layer_template: str = DEFAULT_LAYER_TEMPLATE,
) -> list[str]:
    """Re-derive the plan from (src, m) and check every copy condition.

    Returns a list of violation descriptions; an empty list means the
    up-scale is byte-faithful.
    """
    violations: list[str] = []
    src = load_manifest(src_path, layer_template)
    dst = load_manifest(dst_path, layer_template)
    plan = plan_upscale(src.n_layers, m)

    if dst.n_layers != plan.s:
        violations.append(
            f"layer count: expected s={plan.s}, found {dst.n_layers}"
        )
    if set(dst.layer_suffixes) != set(src.layer_suffixes):
        violations.append(
            f"layer suffixes differ: {src.layer_suffixes} vs {dst.layer_suffixes}"
        )
        return violations

    for target in range(min(plan.s, dst.n_layers)):
        source_layer = plan.provenance[target]
        for suffix in src.layer_suffixes:
            src_entry = src.layer_tensor(source_layer, suffix)
            dst_name = layer_template.format(i=target, suffix=suffix)
            dst_entry = dst.entries.get(dst_name)
            if dst_entry is None:
                violations.append(f"missing tensor {dst_name!r}")
                continue
            if (src_entry.dtype, src_entry.shape) != (dst_entry.dtype, dst_entry.shape):
                violations.append(f"dtype/shape mismatch for {dst_name!r}")
                continue
            if _digest(src_path, src_entry, src.data_start) != _digest(
                dst_path, dst_entry, dst.data_start
            ):
                violations.append(
                    f"tensor {dst_name!r} differs from source layer "
                    f"{source_layer} suffix {suffix!r}"
                )

    for name in src.singleton_names:
        dst_entry = dst.entries.get(name)
        if dst_entry is None:
            violations.append(f"missing singleton tensor {name!r}")
            continue
        if _digest(src_path, src.entries[name], src.data_start) != _digest(
            dst_path, dst_entry, dst.data_start
        ):
            violations.append(f"singleton tensor {name!r} differs from source")

    extra = set(dst.singleton_names) - set(src.singleton_names)
    if extra:
        violations.append(f"unexpected singleton tensors {sorted(extra)}")

    return violations
