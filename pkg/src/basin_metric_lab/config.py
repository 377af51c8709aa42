"""Plain-text scenario configuration.

Format: `key = value` lines, `#` comments, blank lines ignored. Complex
numbers are written `re,im`; coefficient lists are `;`-separated complex
numbers in ascending degree. Documented keys:

    num_coeffs   = -0.5,0 ; 0,0 ; 1,0      # required
    den_coeffs   = 1,0                      # required
    scenario     = finite-basin             # finite-basin | basin-of-infinity
                                            # | per-component
    attracting_point = auto                 # auto | inf | re,im
    base_point   = auto                     # auto | fixed-point | offset:<r> | re,im
    resolution   = 512
    epsilon_attract = 1e-3
    max_iter     = 2000
    depth        = 10
    samples      = 200
    seed         = 1
    threads      = 1
    out_dir      = out
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, ValidationError
from .grid import GridSpec
from .maps import ComplexPoint, RationalMap, parse_map

SCENARIOS = ("finite-basin", "basin-of-infinity", "per-component")
KNOWN_KEYS = {
    "num_coeffs", "den_coeffs", "scenario", "attracting_point", "base_point",
    "resolution", "epsilon_attract", "max_iter", "depth", "samples", "seed",
    "threads", "out_dir",
}


@dataclass(frozen=True)
class ScenarioConfig:
    rmap: RationalMap
    scenario: str = "finite-basin"
    attracting_point: str | ComplexPoint = "auto"
    base_point: str | ComplexPoint = "auto"
    resolution: int = 512
    epsilon_attract: float = 1e-3
    max_iter: int = 2000
    depth: int = 10
    samples: int = 200
    seed: int = 1
    threads: int = 1
    out_dir: Path = Path("out")
    raw: dict = field(default_factory=dict)

    def grid_spec(self) -> GridSpec:
        try:
            return GridSpec(resolution=self.resolution,
                            epsilon_attract=self.epsilon_attract,
                            max_iter=self.max_iter)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc

    def echo(self) -> list[str]:
        """Resolved key = value lines for the report."""
        fmt_c = lambda c: f"{c.real:.17g},{c.imag:.17g}"
        lines = [
            "num_coeffs = " + " ; ".join(fmt_c(c) for c in self.rmap.num_coeffs),
            "den_coeffs = " + " ; ".join(fmt_c(c) for c in self.rmap.den_coeffs),
            f"scenario = {self.scenario}",
            f"attracting_point = {_point_repr(self.attracting_point)}",
            f"base_point = {_point_repr(self.base_point)}",
            f"resolution = {self.resolution}",
            f"epsilon_attract = {self.epsilon_attract:g}",
            f"max_iter = {self.max_iter}",
            f"depth = {self.depth}",
            f"samples = {self.samples}",
            f"seed = {self.seed}",
            f"threads = {self.threads}",
            f"out_dir = {self.out_dir}",
        ]
        return lines


def _point_repr(p) -> str:
    if isinstance(p, str):
        return p
    if p.is_infinity:
        return "inf"
    z = p.as_plane()
    return f"{z.real:.17g},{z.imag:.17g}"


def _parse_complex(text: str, where: str) -> complex:
    parts = text.split(",")
    if len(parts) != 2:
        raise ParseError(f"{where}: expected 're,im', got {text!r}")
    try:
        return complex(float(parts[0]), float(parts[1]))
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from exc


def _parse_coeffs(text: str, where: str) -> list[complex]:
    items = [t.strip() for t in text.split(";") if t.strip()]
    if not items:
        raise ParseError(f"{where}: empty coefficient list")
    return [_parse_complex(t, where) for t in items]


def _parse_int(text: str, where: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ParseError(f"{where}: expected integer, got {text!r}") from exc


def _parse_float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ParseError(f"{where}: expected number, got {text!r}") from exc


def _parse_point_spec(text: str, where: str, allow: tuple):
    if text in allow:
        return text
    if text.startswith("offset:") and "offset" in str(allow):
        _parse_float(text.split(":", 1)[1], where)
        return text
    if text == "inf":
        return ComplexPoint.infinity()
    z = _parse_complex(text, where)
    return ComplexPoint.from_plane(z)


def parse_config_text(text: str, path: str = "<string>") -> ScenarioConfig:
    entries: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected 'key = value', got {raw_line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ParseError(f"{path}:{lineno}: unknown key {key!r}")
        if key in entries:
            raise ParseError(f"{path}:{lineno}: duplicate key {key!r}")
        entries[key] = value

    for req in ("num_coeffs", "den_coeffs"):
        if req not in entries:
            raise ParseError(f"{path}: missing required key {req!r}")

    num = _parse_coeffs(entries["num_coeffs"], "num_coeffs")
    den = _parse_coeffs(entries["den_coeffs"], "den_coeffs")
    try:
        rmap = parse_map(num, den)
    except Exception as exc:
        raise ValidationError(f"map coefficients: {exc}") from exc

    cfg = ScenarioConfig(
        rmap=rmap,
        scenario=entries.get("scenario", "finite-basin"),
        attracting_point=_parse_point_spec(
            entries.get("attracting_point", "auto"), "attracting_point", ("auto",)),
        base_point=_parse_point_spec(
            entries.get("base_point", "auto"), "base_point",
            ("auto", "fixed-point", "offset")),
        resolution=_parse_int(entries.get("resolution", "512"), "resolution"),
        epsilon_attract=_parse_float(entries.get("epsilon_attract", "1e-3"),
                                     "epsilon_attract"),
        max_iter=_parse_int(entries.get("max_iter", "2000"), "max_iter"),
        depth=_parse_int(entries.get("depth", "10"), "depth"),
        samples=_parse_int(entries.get("samples", "200"), "samples"),
        seed=_parse_int(entries.get("seed", "1"), "seed"),
        threads=_parse_int(entries.get("threads", "1"), "threads"),
        out_dir=Path(entries.get("out_dir", "out")),
        raw=dict(entries),
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: ScenarioConfig) -> None:
    if cfg.scenario not in SCENARIOS:
        raise ValidationError(f"scenario must be one of {SCENARIOS}, got {cfg.scenario!r}")
    if cfg.rmap.degree < 2:
        raise ValidationError(f"map degree {cfg.rmap.degree} < 2")
    if cfg.samples < 1:
        raise ValidationError(f"samples must be >= 1, got {cfg.samples}")
    if not (1 <= cfg.depth <= 24):
        raise ValidationError(f"depth must lie in [1, 24], got {cfg.depth}")
    if cfg.threads < 1:
        raise ValidationError(f"threads must be >= 1, got {cfg.threads}")
    if cfg.scenario == "basin-of-infinity" and not cfg.rmap.is_polynomial:
        raise ValidationError("basin-of-infinity scenario requires a polynomial map")
    cfg.grid_spec()  # raises ValidationError on bad grid parameters


def load_config(path) -> ScenarioConfig:
    """Parse and validate a scenario file; errors carry line/key context."""
    p = Path(path)
    if not p.is_file():
        raise ParseError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"), str(p))
