"""Scenario configuration documents (JSON) and their validation.

Units follow the presentation of the SBR literature: depths in m, times in h,
flows in m^3/h, concentrations in kg/m^3.  Settling parameters are SI.
"""
from __future__ import annotations

import json
from dataclasses import asdict, fields
from importlib import resources
from pathlib import Path

import jsonschema

from .constitutive import SettlingParams
from .errors import ConfigError
from .reactions import Asm1Params
from .simulator import STAGE_KINDS, Scenario, Segment, Stage

SCHEMA_VERSION = 1

_vec6 = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 6, "maxItems": 6}
_nonneg = {"type": "number", "minimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "geometry", "initial", "stages"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "description": {"type": "string"},
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "required": ["depth_m", "cells", "area_m2"],
            "properties": {
                "depth_m": {"type": "number", "exclusiveMinimum": 0},
                "cells": {"type": "integer", "minimum": 4},
                "area_m2": {
                    "oneOf": [
                        {"type": "object", "additionalProperties": False, "required": ["constant"],
                         "properties": {"constant": {"type": "number", "exclusiveMinimum": 0}}},
                        {"type": "object", "additionalProperties": False, "required": ["table"],
                         "properties": {"table": {
                             "type": "array", "minItems": 1,
                             "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                       "items": {"type": "number"}}}}},
                    ]
                },
                "area_note": {"type": "string"},
            },
        },
        "physics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {f.name: {"type": "number"} for f in fields(SettlingParams)},
        },
        "reactions": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "model": {"enum": ["asm1", "zero"]},
                "params": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {f.name: {"type": "number"} for f in fields(Asm1Params)},
                },
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "required": ["surface_m", "segments"],
            "properties": {
                "surface_m": _nonneg,
                "segments": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["z_from", "z_to", "C", "S"],
                        "properties": {"z_from": {"type": "number"}, "z_to": {"type": "number"},
                                       "C": _vec6, "S": _vec6},
                    },
                },
            },
        },
        "stages": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "kind", "t_start_h", "t_end_h"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "kind": {"enum": list(STAGE_KINDS)},
                    "t_start_h": {"type": "number"},
                    "t_end_h": {"type": "number"},
                    "Q_f_m3h": _nonneg,
                    "Q_u_m3h": _nonneg,
                    "Q_e_m3h": _nonneg,
                    "X_f": _nonneg,
                    "C_f_fractions": _vec6,
                    "S_f": _vec6,
                    "regime": {"enum": ["pde", "ode"]},
                    "aeration_S_O": {"type": ["number", "null"], "minimum": 0},
                },
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "snapshot_every_s": {"type": "number", "exclusiveMinimum": 0},
                "series_every_s": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}


def _path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def scenario_from_dict(doc: dict) -> Scenario:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        msg = "; ".join(f"{_path(e)}: {e.message}" for e in errors[:5])
        raise ConfigError(f"invalid configuration: {msg}")

    g = doc["geometry"]
    area = g["area_m2"]
    table = None
    if "table" in area:
        table = tuple((float(z), float(a)) for z, a in area["table"])
        area_value = 0.0
    else:
        area_value = float(area["constant"])
    try:
        settling = SettlingParams(**doc.get("physics", {}))
    except ValueError as exc:
        raise ConfigError(f"physics: {exc}") from exc
    rx = doc.get("reactions", {})
    try:
        Asm1Params.from_dict(rx.get("params", {}))
    except ValueError as exc:
        raise ConfigError(f"reactions/params: {exc}") from exc

    init = doc["initial"]
    segments = tuple(Segment(float(s["z_from"]), float(s["z_to"]), tuple(s["C"]), tuple(s["S"]))
                     for s in init["segments"])
    for i, s in enumerate(segments):
        if not s.z_from < s.z_to:
            raise ConfigError(f"initial/segments/{i}: need z_from < z_to")
    if not init["surface_m"] < g["depth_m"]:
        raise ConfigError("initial/surface_m: surface must lie above the tank bottom")

    stages = []
    for i, s in enumerate(doc["stages"]):
        st = Stage(
            name=s["name"], kind=s["kind"], t_start_h=s["t_start_h"], t_end_h=s["t_end_h"],
            Q_f_m3h=s.get("Q_f_m3h", 0.0), Q_u_m3h=s.get("Q_u_m3h", 0.0), Q_e_m3h=s.get("Q_e_m3h", 0.0),
            X_f=s.get("X_f", 0.0), C_f_fractions=tuple(s.get("C_f_fractions", (0.0,) * 6)),
            S_f=tuple(s.get("S_f", (0.0,) * 6)), regime=s.get("regime", "pde"),
            aeration_S_O=s.get("aeration_S_O"),
        )
        if not st.t_end_h > st.t_start_h:
            raise ConfigError(f"stages/{i} ({st.name}): t_end_h must exceed t_start_h")
        if st.Q_f_m3h > 0 and st.Q_e_m3h > 0:
            raise ConfigError(f"stages/{i} ({st.name}): cannot fill and extract simultaneously")
        stages.append(st)
    for a, b in zip(stages, stages[1:]):
        if b.t_start_h < a.t_end_h:
            raise ConfigError(f"stages overlap: {a.name!r} [{a.t_start_h}, {a.t_end_h}] h and "
                              f"{b.name!r} [{b.t_start_h}, {b.t_end_h}] h")
        if b.t_start_h > a.t_end_h:
            raise ConfigError(f"gap between stages {a.name!r} and {b.name!r}")

    out = doc.get("outputs", {})
    return Scenario(
        depth=float(g["depth_m"]), cells=int(g["cells"]), area=area_value, settling=settling,
        reaction_model=rx.get("model", "asm1"), reaction_params=dict(rx.get("params", {})),
        surface0=float(init["surface_m"]), segments=segments, stages=tuple(stages),
        snapshot_every=float(out.get("snapshot_every_s", 10.0)),
        series_every=float(out.get("series_every_s", 1.0)), area_table=table,
    )


def scenario_to_dict(sc: Scenario) -> dict:
    area = {"table": [list(p) for p in sc.area_table]} if sc.area_table is not None else {"constant": sc.area}
    stages = []
    for st in sc.stages:
        d = asdict(st)
        d["C_f_fractions"] = list(st.C_f_fractions)
        d["S_f"] = list(st.S_f)
        stages.append(d)
    return {
        "schema_version": SCHEMA_VERSION,
        "geometry": {"depth_m": sc.depth, "cells": sc.cells, "area_m2": area},
        "physics": asdict(sc.settling),
        "reactions": {"model": sc.reaction_model, "params": dict(sc.reaction_params)},
        "initial": {"surface_m": sc.surface0,
                    "segments": [{"z_from": s.z_from, "z_to": s.z_to, "C": list(s.C), "S": list(s.S)}
                                 for s in sc.segments]},
        "stages": stages,
        "outputs": {"snapshot_every_s": sc.snapshot_every, "series_every_s": sc.series_every},
    }


def parse_config(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return scenario_from_dict(doc)


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package (e.g. ``reference_sbr.json``)."""
    return Path(str(resources.files("reactsettle") / "data" / name))


def load_bundled(name: str) -> Scenario:
    return parse_config(bundled_config(name))
