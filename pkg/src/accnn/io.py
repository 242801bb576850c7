"""File formats: binary PGM, annotation CSV, density CSV, fuzzy and bank configs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .density import PointAnnotation, check_density
from .fuzzy import POSITION_TERMS, SIZE_TERMS, FuzzyConfig, FuzzyRule, HPLevel, LinguisticTerm
from .headsize import PerspectiveModel
from .regressor import HPConfig, load_model, save_model


class FormatError(ValueError):
    pass


def _fmt(v):
    return format(float(v), ".17g")


# PGM ------------------------------------------------------------------------

_WHITESPACE = b" \t\r\n\v\f"


def _pgm_tokens(data, count):
    """Read ``count`` header tokens, skipping ``#`` comments; return tokens and payload offset."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos] in _WHITESPACE:
            pos += 1
        if pos < len(data) and data[pos] == ord("#"):
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
            continue
        if pos >= len(data):
            raise FormatError(f"byte {pos}: truncated PGM header")
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        tokens.append((data[start:pos], start))
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise FormatError(f"byte {pos}: expected a single whitespace byte after maxval")
    return tokens, pos + 1


def load_pgm(path):
    """Read a binary (P5) 8-bit PGM into a ``(height, width)`` uint8 array."""
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        if data[:2] in (b"P2", b"P1", b"P3", b"P4", b"P6"):
            raise FormatError(f"byte 0: unsupported format {data[:2].decode()!r}, only binary P5 is read")
        raise FormatError("byte 0: not a PGM file (bad magic)")
    tokens, offset = _pgm_tokens(data[2:], 3)
    values = []
    for tok, at in tokens:
        try:
            values.append(int(tok))
        except ValueError:
            raise FormatError(f"byte {at + 2}: bad header field {tok!r}") from None
    width, height, maxval = values
    if maxval != 255:
        raise FormatError(f"byte {tokens[2][1] + 2}: maxval {maxval} unsupported, need 255")
    if width <= 0 or height <= 0:
        raise FormatError(f"byte {tokens[0][1] + 2}: bad dimensions {width}x{height}")
    offset += 2
    need = width * height
    payload = data[offset:offset + need]
    if len(payload) < need:
        raise FormatError(f"byte {offset + len(payload)}: short payload, expected {need} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def save_pgm(image, path):
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError("save_pgm needs a 2-D uint8 array")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image).tobytes())


# annotations ----------------------------------------------------------------

ANNOTATION_HEADER = ["image_id", "x", "y", "head_size"]


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    x: float
    y: float
    head_size: Optional[float] = None

    def point(self):
        return PointAnnotation(self.x, self.y, self.head_size)


def load_annotations(path):
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError("line 1: missing header")
        if [h.strip() for h in header] != ANNOTATION_HEADER:
            raise FormatError(f"line 1: header must be {','.join(ANNOTATION_HEADER)}, got {','.join(header)}")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise FormatError(f"line {lineno}: expected 4 columns, got {len(row)}")
            image_id, xs, ys, ss = (c.strip() for c in row)
            try:
                x, y = float(xs), float(ys)
                size = float(ss) if ss else None
            except ValueError:
                raise FormatError(f"line {lineno}: non-numeric field in {row}") from None
            if not (math.isfinite(x) and math.isfinite(y)) or (size is not None and not size > 0):
                raise FormatError(f"line {lineno}: invalid value in {row}")
            records.append(AnnotationRecord(image_id, x, y, size))
    return records


def save_annotations(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ANNOTATION_HEADER)
        for r in records:
            writer.writerow([r.image_id, _fmt(r.x), _fmt(r.y), "" if r.head_size is None else _fmt(r.head_size)])


def group_annotations(records):
    """``{image_id: [PointAnnotation, ...]}`` preserving file order."""
    out = {}
    for r in records:
        out.setdefault(r.image_id, []).append(r.point())
    return out


def check_points_in_image(points, width, height, image_id=""):
    bad = [i for i, p in enumerate(points) if not (0 <= p.x < width and 0 <= p.y < height)]
    if bad:
        raise FormatError(f"annotations for {image_id!r} outside the {width}x{height} image at indices {bad}")


# density maps ---------------------------------------------------------------

def save_density_csv(density, path):
    density = check_density(density)
    h, w = density.shape
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{w},{h}\n")
        for row in density:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def load_density_csv(path):
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("line 1: empty file")
    try:
        w, h = (int(v) for v in lines[0].split(","))
    except ValueError:
        raise FormatError(f"line 1: bad dimension header {lines[0]!r}") from None
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != h:
        raise FormatError(f"dimension mismatch: header says {h} rows, found {len(body)}")
    out = np.empty((h, w))
    for i, line in enumerate(body):
        fields = line.split(",")
        if len(fields) != w:
            raise FormatError(f"line {i + 2}: dimension mismatch, header says {w} columns, found {len(fields)}")
        try:
            out[i] = [float(f) for f in fields]
        except ValueError:
            raise FormatError(f"line {i + 2}: non-numeric value") from None
    return check_density(out)


def render_density_pgm(density, path):
    """Scale ``[0, max]`` linearly onto ``[0, 255]`` (round half up) and save as P5."""
    density = check_density(density)
    peak = density.max() if density.size else 0.0
    if peak <= 0:
        img = np.zeros(density.shape, dtype=np.uint8)
    else:
        img = np.floor(density / peak * 255.0 + 0.5).clip(0, 255).astype(np.uint8)
    save_pgm(img, path)
    return img


# fuzzy config ---------------------------------------------------------------

DEFAULT_FIS_RESOURCE = "default_fis.cfg"


def _fis_keys(prefix, terms):
    return [f"{prefix}.{t}.{attr}" for t in terms for attr in ("center", "width")]


FIS_KEYS = (
    _fis_keys("size", SIZE_TERMS)
    + _fis_keys("position", POSITION_TERMS)
    + _fis_keys("output", [lv.value for lv in HPLevel])
)


def parse_fis_config(text, source="<string>"):
    """Parse ``key = value`` term parameters and ``rule: size,position -> output`` lines."""
    values, rules = {}, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("rule:"):
            body = line[len("rule:"):]
            try:
                lhs, out = (s.strip() for s in body.split("->"))
                size, pos = (s.strip() for s in lhs.split(","))
            except ValueError:
                raise FormatError(f"{source}:{lineno}: malformed rule {raw.strip()!r}") from None
            rules.append(FuzzyRule(size, pos, out))
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in FIS_KEYS:
            raise FormatError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise FormatError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = float(val)
        except ValueError:
            raise FormatError(f"{source}:{lineno}: non-numeric value for {key!r}") from None
    missing = [k for k in FIS_KEYS if k not in values]
    if missing:
        raise FormatError(f"{source}: missing keys {missing}")

    def terms(prefix, names):
        return tuple(
            LinguisticTerm(n, values[f"{prefix}.{n}.center"], values[f"{prefix}.{n}.width"]) for n in names
        )

    return FuzzyConfig(
        size_terms=terms("size", SIZE_TERMS),
        position_terms=terms("position", POSITION_TERMS),
        output_terms=terms("output", ("Low-Pred", "Mid-Pred", "High-Pred")),
        rules=tuple(rules),
    )


def load_fis_config(path=None):
    """Load a fuzzy config file; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("accnn").joinpath("data", DEFAULT_FIS_RESOURCE).read_text(encoding="utf-8")
        return parse_fis_config(text, DEFAULT_FIS_RESOURCE)
    return parse_fis_config(Path(path).read_text(encoding="utf-8"), str(path))


def dump_fis_config(cfg):
    lines = []
    for prefix, terms in (("size", cfg.size_terms), ("position", cfg.position_terms), ("output", cfg.output_terms)):
        for t in terms:
            lines.append(f"{prefix}.{t.name}.center = {t.center!r}")
            lines.append(f"{prefix}.{t.name}.width = {t.width!r}")
    lines.extend(f"rule: {r.size_term},{r.position_term} -> {r.output_term}" for r in cfg.rules)
    return "\n".join(lines) + "\n"


# model bank -----------------------------------------------------------------

BANK_FILE = "bank.cfg"
PERSPECTIVE_FILE = "perspective.cfg"


def parse_hp_configs(text, source="<string>"):
    hps = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            key, val = (s.strip() for s in line.split("=", 1))
            patch, sigma, stride = (s.strip() for s in val.split(","))
            hps.append(HPConfig(HPLevel(key), int(patch), float(sigma), int(stride)))
        except ValueError as exc:
            raise FormatError(f"{source}:{lineno}: bad level line {raw.strip()!r} ({exc})") from None
    return tuple(hps)


def dump_hp_configs(hps):
    return "".join(f"{hp.level.value} = {hp.patch_size},{hp.sigma!r},{hp.stride}\n" for hp in hps)


def save_bank(bank, directory, perspective=None):
    from .fuzzy import LEVEL_ORDER

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    hps = [bank[lv][0] for lv in LEVEL_ORDER]
    (directory / BANK_FILE).write_text(dump_hp_configs(hps), encoding="ascii")
    for lv in LEVEL_ORDER:
        save_model(bank[lv][1], directory / f"{lv.value}.model")
    if perspective is not None:
        (directory / PERSPECTIVE_FILE).write_text(
            f"slope = {perspective.slope!r}\nintercept = {perspective.intercept!r}\nfloor = {perspective.floor!r}\n",
            encoding="ascii",
        )


def load_bank(directory):
    from .pipeline import ModelBank

    directory = Path(directory)
    bank_file = directory / BANK_FILE
    if not bank_file.exists():
        raise FormatError(f"{directory}: no {BANK_FILE}, not a model bank")
    hps = parse_hp_configs(bank_file.read_text(encoding="ascii"), str(bank_file))
    entries = {hp.level: (hp, load_model(directory / f"{hp.level.value}.model")) for hp in hps}
    return ModelBank(entries)


def load_perspective(directory):
    path = Path(directory) / PERSPECTIVE_FILE
    if not path.exists():
        raise FormatError(f"{directory}: bank has no {PERSPECTIVE_FILE}; train with head sizes to fit one")
    vals = {}
    for lineno, raw in enumerate(path.read_text(encoding="ascii").splitlines(), 1):
        if not raw.strip():
            continue
        key, val = (s.strip() for s in raw.split("=", 1))
        if key not in ("slope", "intercept", "floor"):
            raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
        vals[key] = float(val)
    return PerspectiveModel(vals["slope"], vals["intercept"], vals.get("floor", 2.0))
