"""Plain-text persistence: instance files and flat array dumps.

Instance file (one per instance)::

    # comment lines and blank lines are ignored
    format = confounded-mdp/1
    name = BD-2
    mode = backdoor            # or frontdoor
    horizon = 2
    n_states = 2
    n_actions = 2
    n_conf = 2
    n_mid = 0                  # frontdoor only
    obs_map = 0 1              # [w]
    init = 0.5 0.5             # [s]
    conf = ...                 # [h][s][w]
    behavior = ...             # [h][s][w][a]
    trans = ...                # [h][s][a][w][s']     backdoor
    reward = ...               # [h][s][a][w]         backdoor
    itrans = ...               # [h][s][a][m]         frontdoor
    ftrans = ...               # [h][s][m][w][s']     frontdoor
    freward = ...              # [h][s][a]            frontdoor

Arrays are flattened in the stated index order (C order, last index fastest).
Probability rows off by more than 1e-9 are rejected; smaller residuals are
renormalized on load.

Flat dump (FeatureMap / ridge snapshots)::

    # dovi-dump/1
    <name> <ndim> <dim_1> ... <dim_ndim>
    <values in C order, whitespace separated>
    ...
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mdp import BACKDOOR, FRONTDOOR, ConfoundedMDP

INSTANCE_FORMAT = "confounded-mdp/1"
DUMP_FORMAT = "dovi-dump/1"
PARSE_ROW_TOL = 1e-9

_SCALARS = ("horizon", "n_states", "n_actions", "n_conf", "n_mid")
_PROB_TABLES = ("init", "conf", "behavior", "trans", "itrans", "ftrans")


class InstanceFormatError(ValueError):
    pass


def _fmt(values: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values, dtype=float).ravel())


def format_instance(mdp: ConfoundedMDP) -> str:
    lines = [
        f"# index order documented in dovi.textio",
        f"format = {INSTANCE_FORMAT}",
        f"name = {mdp.name}",
        f"mode = {mdp.mode}",
        f"horizon = {mdp.horizon}",
        f"n_states = {mdp.n_states}",
        f"n_actions = {mdp.n_actions}",
        f"n_conf = {mdp.n_conf}",
        f"n_mid = {mdp.n_mid}",
        "obs_map = " + " ".join(str(int(u)) for u in mdp.obs_map),
        f"init = {_fmt(mdp.init)}",
        f"conf = {_fmt(mdp.conf)}",
        f"behavior = {_fmt(mdp.behavior)}",
    ]
    keys = ("trans", "reward") if mdp.mode == BACKDOOR else ("itrans", "ftrans", "freward")
    lines += [f"{k} = {_fmt(getattr(mdp, k))}" for k in keys]
    return "\n".join(lines) + "\n"


def write_instance(mdp: ConfoundedMDP, path: str | Path) -> None:
    Path(path).write_text(format_instance(mdp))


def parse_instance(text: str, source: str = "<string>") -> ConfoundedMDP:
    fields: dict[str, tuple[int, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InstanceFormatError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in fields:
            raise InstanceFormatError(f"{source}:{lineno}: duplicate key {key!r}")
        fields[key] = (lineno, value)

    def need(key):
        if key not in fields:
            raise InstanceFormatError(f"{source}: missing key {key!r}")
        return fields[key]

    fmt = need("format")[1]
    if fmt != INSTANCE_FORMAT:
        raise InstanceFormatError(f"{source}: unsupported format {fmt!r}")
    mode = need("mode")[1]
    if mode not in (BACKDOOR, FRONTDOOR):
        raise InstanceFormatError(f"{source}:{fields['mode'][0]}: unknown mode {mode!r}")

    sizes = {}
    for key in _SCALARS:
        if key == "n_mid" and key not in fields:
            sizes[key] = 0
            continue
        lineno, value = need(key)
        try:
            sizes[key] = int(value)
        except ValueError:
            raise InstanceFormatError(f"{source}:{lineno}: {key} must be an integer") from None
    H, S, A, W, M = (sizes[k] for k in _SCALARS)

    lineno, value = need("obs_map")
    obs_map = np.array([int(t) for t in value.split()], dtype=np.int64)
    if len(obs_map) != W:
        raise InstanceFormatError(f"{source}:{lineno}: obs_map has {len(obs_map)} entries, expected {W}")

    shapes = {"init": (S,), "conf": (H, S, W), "behavior": (H, S, W, A)}
    if mode == BACKDOOR:
        shapes.update(trans=(H, S, A, W, S), reward=(H, S, A, W))
    else:
        shapes.update(itrans=(H, S, A, M), ftrans=(H, S, M, W, S), freward=(H, S, A))

    tables = {}
    for key, shape in shapes.items():
        lineno, value = need(key)
        try:
            flat = np.array([float(t) for t in value.split()])
        except ValueError:
            raise InstanceFormatError(f"{source}:{lineno}: non-numeric entry in {key}") from None
        if flat.size != int(np.prod(shape)):
            raise InstanceFormatError(
                f"{source}:{lineno}: {key} has {flat.size} values, expected {int(np.prod(shape))} for shape {shape}")
        table = flat.reshape(shape)
        if key in _PROB_TABLES:
            sums = table.sum(axis=-1)
            bad = np.abs(sums - 1.0) > PARSE_ROW_TOL
            if np.any(bad) or np.any(table < 0):
                idx = tuple(int(i) for i in np.argwhere(bad)[0]) if np.any(bad) else "negative entry"
                raise InstanceFormatError(f"{source}:{lineno}: {key} row {idx} is not a probability distribution")
            # rows already within the instance tolerance are kept bit-exact
            loose = np.abs(sums - 1.0) > 1e-12
            table = np.where(loose[..., None], table / sums[..., None], table)
        tables[key] = table

    extra = set(fields) - set(shapes) - set(_SCALARS) - {"format", "name", "mode", "obs_map"}
    if extra:
        raise InstanceFormatError(f"{source}: unknown keys {sorted(extra)}")
    name = fields.get("name", (0, Path(source).stem))[1]
    return ConfoundedMDP(name=name, horizon=H, n_states=S, n_actions=A, n_conf=W, obs_map=obs_map,
                         n_mid=M, **tables)


def read_instance(path: str | Path) -> ConfoundedMDP:
    path = Path(path)
    return parse_instance(path.read_text(), source=str(path))


def write_dump(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    lines = [f"# {DUMP_FORMAT}"]
    for name, arr in arrays.items():
        if " " in name:
            raise ValueError(f"dump array names cannot contain spaces: {name!r}")
        arr = np.asarray(arr, dtype=float)
        lines.append(" ".join([name, str(arr.ndim)] + [str(n) for n in arr.shape]))
        lines.append(_fmt(arr) if arr.size else "-")
    Path(path).write_text("\n".join(lines) + "\n")


def read_dump(path: str | Path) -> dict[str, np.ndarray]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != f"# {DUMP_FORMAT}":
        raise ValueError(f"{path}: not a {DUMP_FORMAT} file")
    out = {}
    body = lines[1:]
    if len(body) % 2:
        raise ValueError(f"{path}: truncated dump")
    for head, values in zip(body[::2], body[1::2]):
        parts = head.split()
        name, ndim = parts[0], int(parts[1])
        shape = tuple(int(n) for n in parts[2:2 + ndim])
        data = np.zeros(0) if values.strip() == "-" else np.array([float(t) for t in values.split()])
        out[name] = data.reshape(shape)
    return out
