"""Versioned YAML scenario files.

Example::

    schema_version: 1
    experiment: fusion
    preset: paper
    waveform: {pmi: 0.7}
    scene:
      targets:
        - {range: 2.6}
        - {range: 2.6167}
    noise: {snr_db: .inf, seed: 0}
    seed: 1

Every error names the offending field and the line it sits on.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .channel import LinkNoiseConfig, Target, TargetScene
from .errors import ConfigError, JrcError
from .fusion import FusionConfig
from .waveform import JrcWaveformConfig, OfdmConfig, preset

SCHEMA_VERSION = 1
EXPERIMENTS = ("generate", "comm-ber", "radar-profile", "fusion", "pmi-sweep", "snr-sweep")

_TOP_KEYS = {"schema_version", "experiment", "preset", "waveform", "scene", "noise", "seed",
             "pulses", "sweep", "fusion", "radar", "output"}
_WAVEFORM_KEYS = {f.name for f in dataclasses.fields(JrcWaveformConfig)} - {"ofdm"}
_OFDM_KEYS = {f.name for f in dataclasses.fields(OfdmConfig)}
_SWEEP_KEYS = {"pmi", "snr_db", "trials"}
_FUSION_KEYS = {"model_order", "coherence_correction", "prune_db", "scene_margin"}
_RADAR_KEYS = {"window", "zero_pad_factor"}

# Reference scenes at paper scale; the desk preset stretches ranges by 10
# so resolution cells keep the same size in bins.
PRESET_RANGE_SCALE = {"paper": 1.0, "desk": 10.0}
DEFAULT_SCENES = {
    "radar-profile": (2.6, 2.675),
    "fusion": (2.6, 2.6167),
    "pmi-sweep": (2.6, 2.675),
}
DEFAULT_PMI_SWEEP = (0.2, 0.4, 0.7, 1.0, 1.2)
DEFAULT_SNR_SWEEP = (10.0, 14.0, 18.0, 22.0, 26.0, 30.0, 34.0)
DEFAULT_PMI_SWEEP_SNR_DB = 20.0


@dataclass(frozen=True)
class Scenario:
    experiment: str
    preset: str
    waveform: JrcWaveformConfig
    scene: TargetScene
    noise: LinkNoiseConfig
    seed: int = 0
    pulses: int = 2
    pmi_values: tuple[float, ...] = DEFAULT_PMI_SWEEP
    snr_values: tuple[float, ...] = DEFAULT_SNR_SWEEP
    trials: int = 3
    fusion: FusionConfig = field(default_factory=FusionConfig)
    scene_margin: float = 0.5
    window: str = "hann"
    zero_pad_factor: int = 8
    output: str | None = None
    source: str | None = None

    def canonical(self) -> dict:
        """JSON-ready description used for hashing and the manifest."""
        def conv(o):
            if dataclasses.is_dataclass(o):
                return {f.name: conv(getattr(o, f.name)) for f in dataclasses.fields(o)}
            if isinstance(o, (list, tuple)):
                return [conv(v) for v in o]
            if isinstance(o, float) and not math.isfinite(o):
                return repr(o)
            return o
        d = conv(self)
        d.pop("output", None)
        d.pop("source", None)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **kw) -> "Scenario":
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})


class _Located:
    """YAML mapping/sequence values paired with their source lines."""

    def __init__(self, value, line):
        self.value, self.line = value, line


def _compose(text: str, source: str):
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if node is None:
        raise ConfigError(f"{source}: empty scenario file")
    return _convert(node)


def _convert(node):
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            out[str(k.value)] = _convert(v)
        return _Located(out, line)
    if isinstance(node, yaml.SequenceNode):
        return _Located([_convert(v) for v in node.value], line)
    value = yaml.safe_load(yaml.serialize(node))
    return _Located(value, line)


class _Reader:
    def __init__(self, source: str):
        self.source = source

    def fail(self, path: str, loc: _Located | None, msg: str):
        where = f"{self.source}:{loc.line}" if loc is not None else self.source
        raise ConfigError(f"{where}: field '{path}': {msg}")

    def mapping(self, path, loc, allowed):
        if not isinstance(loc.value, dict):
            self.fail(path, loc, "expected a mapping")
        for k, v in loc.value.items():
            if k not in allowed:
                self.fail(f"{path}.{k}" if path else k, v, "unknown field")
        return loc.value

    def number(self, path, loc, *, integer=False, lo=None, allow_inf=False):
        v = loc.value
        if isinstance(v, str) and allow_inf and v.strip().lower() in ("inf", "+inf", "-inf"):
            v = float(v)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(path, loc, f"expected a number, got {v!r}")
        if integer and (not float(v).is_integer()):
            self.fail(path, loc, f"expected an integer, got {v!r}")
        if math.isnan(v) or (math.isinf(v) and not allow_inf):
            self.fail(path, loc, "must be finite")
        if lo is not None and v < lo:
            self.fail(path, loc, f"must be >= {lo}")
        return int(v) if integer else float(v)

    def numbers(self, path, loc, **kw):
        if not isinstance(loc.value, list) or not loc.value:
            self.fail(path, loc, "expected a non-empty list")
        return tuple(self.number(f"{path}[{i}]", v, **kw) for i, v in enumerate(loc.value))

    def string(self, path, loc, choices=None):
        if not isinstance(loc.value, str):
            self.fail(path, loc, f"expected a string, got {loc.value!r}")
        if choices is not None and loc.value not in choices:
            self.fail(path, loc, f"must be one of {', '.join(choices)}")
        return loc.value


def parse_scenario(text: str, source: str = "<scenario>", *, experiment: str | None = None,
                   preset_name: str | None = None) -> Scenario:
    """Parse scenario YAML. ``experiment``/``preset_name`` fill in missing fields."""
    r = _Reader(source)
    root = _compose(text, source)
    top = r.mapping("", root, _TOP_KEYS)

    if "schema_version" not in top:
        raise ConfigError(f"{source}: field 'schema_version' is required")
    ver = r.number("schema_version", top["schema_version"], integer=True)
    if ver != SCHEMA_VERSION:
        r.fail("schema_version", top["schema_version"],
               f"unsupported version {ver} (this build reads {SCHEMA_VERSION})")

    exp = experiment
    if "experiment" in top:
        in_file = r.string("experiment", top["experiment"], EXPERIMENTS)
        exp = experiment or in_file
    if exp is None:
        raise ConfigError(f"{source}: field 'experiment' is required")

    pname = preset_name
    if pname is None:
        pname = r.string("preset", top["preset"], tuple(PRESET_RANGE_SCALE)) if "preset" in top else "desk"
    elif "preset" in top:
        r.string("preset", top["preset"], tuple(PRESET_RANGE_SCALE))

    try:
        base = preset(pname)
    except ConfigError as exc:
        raise ConfigError(f"{source}: field 'preset': {exc}") from None
    wf = base
    if "waveform" in top:
        wmap = r.mapping("waveform", top["waveform"], _WAVEFORM_KEYS | {"ofdm"})
        kw = {k: r.number(f"waveform.{k}", v) for k, v in wmap.items() if k != "ofdm"}
        ofdm = base.ofdm
        if "ofdm" in wmap:
            omap = r.mapping("waveform.ofdm", wmap["ofdm"], _OFDM_KEYS)
            okw = {}
            for k, v in omap.items():
                integer = k in ("n_subcarriers", "qam_order", "pilot_spacing", "frame_count")
                okw[k] = r.number(f"waveform.ofdm.{k}", v, integer=integer)
            try:
                ofdm = dataclasses.replace(ofdm, **okw)
            except JrcError as exc:
                r.fail("waveform.ofdm", wmap["ofdm"], str(exc))
        try:
            wf = dataclasses.replace(base, ofdm=ofdm, **kw)
        except JrcError as exc:
            r.fail("waveform", top["waveform"], str(exc))

    scale = PRESET_RANGE_SCALE[pname]
    if "scene" in top:
        smap = r.mapping("scene", top["scene"], {"targets", "propagation_speed"})
        targets = []
        if "targets" in smap:
            tl = smap["targets"]
            if not isinstance(tl.value, list):
                r.fail("scene.targets", tl, "expected a list")
            for i, t in enumerate(tl.value):
                tm = r.mapping(f"scene.targets[{i}]", t, {"range", "reflectivity"})
                if "range" not in tm:
                    r.fail(f"scene.targets[{i}]", t, "missing 'range'")
                rng = r.number(f"scene.targets[{i}].range", tm["range"])
                rho = r.number(f"scene.targets[{i}].reflectivity", tm["reflectivity"]) \
                    if "reflectivity" in tm else 1.0
                try:
                    targets.append(Target(rng, rho))
                except JrcError as exc:
                    r.fail(f"scene.targets[{i}]", t, str(exc))
        skw = {}
        if "propagation_speed" in smap:
            skw["propagation_speed"] = r.number("scene.propagation_speed",
                                                smap["propagation_speed"], lo=1.0)
        scene = TargetScene(tuple(targets), **skw)
    else:
        scene = TargetScene.from_ranges([x * scale for x in DEFAULT_SCENES.get(exp, (2.6,))])

    default_snr = DEFAULT_PMI_SWEEP_SNR_DB if exp == "pmi-sweep" else math.inf
    noise = LinkNoiseConfig(default_snr, 0)
    if "noise" in top:
        nmap = r.mapping("noise", top["noise"], {"snr_db", "seed"})
        snr = r.number("noise.snr_db", nmap["snr_db"], allow_inf=True) if "snr_db" in nmap else default_snr
        nseed = r.number("noise.seed", nmap["seed"], integer=True, lo=0) if "seed" in nmap else 0
        noise = LinkNoiseConfig(snr, nseed)

    kw = {}
    if "seed" in top:
        kw["seed"] = r.number("seed", top["seed"], integer=True, lo=0)
    if "pulses" in top:
        kw["pulses"] = r.number("pulses", top["pulses"], integer=True, lo=1)
    if "sweep" in top:
        sw = r.mapping("sweep", top["sweep"], _SWEEP_KEYS)
        if "pmi" in sw:
            vals = r.numbers("sweep.pmi", sw["pmi"])
            if any(not 0 < v <= 2 for v in vals):
                r.fail("sweep.pmi", sw["pmi"], "PMI values must lie in (0, 2]")
            kw["pmi_values"] = vals
        if "snr_db" in sw:
            kw["snr_values"] = r.numbers("sweep.snr_db", sw["snr_db"], allow_inf=True)
        if "trials" in sw:
            kw["trials"] = r.number("sweep.trials", sw["trials"], integer=True, lo=1)
    if "fusion" in top:
        fm = r.mapping("fusion", top["fusion"], _FUSION_KEYS)
        fkw = {}
        if "model_order" in fm:
            mo = fm["model_order"]
            fkw["model_order"] = "auto" if mo.value == "auto" else \
                r.number("fusion.model_order", mo, integer=True, lo=1)
        if "coherence_correction" in fm:
            cc = fm["coherence_correction"].value
            if cc not in (True, False, "on", "off"):
                r.fail("fusion.coherence_correction", fm["coherence_correction"],
                       "expected on/off")
            fkw["coherence_correction"] = cc in (True, "on")
        if "prune_db" in fm:
            fkw["prune_db"] = r.number("fusion.prune_db", fm["prune_db"])
        if "scene_margin" in fm:
            kw["scene_margin"] = r.number("fusion.scene_margin", fm["scene_margin"], lo=0.0)
        kw["fusion"] = FusionConfig(**fkw)
    if "radar" in top:
        rm = r.mapping("radar", top["radar"], _RADAR_KEYS)
        if "window" in rm:
            kw["window"] = r.string("radar.window", rm["window"], ("hann", "rect", "hamming", "blackman"))
        if "zero_pad_factor" in rm:
            kw["zero_pad_factor"] = r.number("radar.zero_pad_factor", rm["zero_pad_factor"],
                                             integer=True, lo=1)
    if "output" in top:
        kw["output"] = r.string("output", top["output"])

    if exp in ("radar-profile", "fusion", "pmi-sweep") and not scene.targets:
        raise ConfigError(f"{source}: field 'scene.targets': {exp} needs at least one target")
    return Scenario(exp, pname, wf, scene, noise, source=source, **kw)


def load_scenario(path, **kw) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {p}: {exc.strerror}") from None
    return parse_scenario(text, str(p), **kw)


def default_scenario(experiment: str, preset_name: str = "desk") -> Scenario:
    """Built-in scenario for a subcommand run without --scenario."""
    return parse_scenario(f"schema_version: {SCHEMA_VERSION}\n", "<default>",
                          experiment=experiment, preset_name=preset_name)
