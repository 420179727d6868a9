"""Target architecture description, validation, and resource estimation.

The estimator is an affine model in array_size**2 whose coefficients were
calibrated once against synthesis results for the reference 8x8 / 16-bit
configuration and then frozen; see the constants below. It is deliberately
coarse: good enough to rank configurations and check budget fit, not a
substitute for synthesis.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from decimal import ROUND_HALF_UP, Decimal

from .errors import ArchConfigError

# Calibration, reference point array_size=8, data_width_bits=16:
#   lut  = 7979 + ceil(75/8  * width * size^2)  -> 7979 + 9600  = 17579
#   ff   = 7260 + ceil(25/2  * width * size^2)  -> 7260 + 12800 = 20060
#   dsp  =        ceil(85/1024 * width * size^2) ->               85
#   bram = ceil((local+acc)*size*width / 18432) + 1302 -> 72 + 1302 = 1374
#   io   = 36 (pin count is interface-bound, not array-bound)
# The bram base absorbs everything the reference build counted beyond the
# array memories; the estimator reproduces that accounting verbatim.
_LUT_BASE = 7979
_LUT_PER_BIT_PE = (75, 8)
_FF_BASE = 7260
_FF_PER_BIT_PE = (25, 2)
_DSP_PER_BIT_PE = (85, 1024)
_BRAM_BASE = 1302
_BRAM_BITS_PER_UNIT = 18432
_IO_PINS = 36


@dataclass(frozen=True)
class ArchConfig:
    """One tensor-compute-unit instance."""

    array_size: int = 8
    data_width_bits: int = 16
    frac_bits: int = 8
    local_depth: int = 8192
    acc_depth: int = 2048
    dram0_depth: int = 1048576
    dram1_depth: int = 1048576
    clock_mhz: int = 100
    dram_latency_factor: int = 4
    simd_lanes: int = 8


DEFAULT_ARCH = ArchConfig()

_ARCH_FIELDS = tuple(f.name for f in fields(ArchConfig))


def validate_arch(cfg):
    """Return a list of (field, message) violations; empty means valid."""
    v = []
    if cfg.array_size < 2:
        v.append(("array_size", f"must be at least 2, got {cfg.array_size}"))
    if not 0 < cfg.frac_bits < cfg.data_width_bits:
        v.append(("frac_bits",
                  f"need 0 < frac_bits < data_width_bits, got "
                  f"frac={cfg.frac_bits} width={cfg.data_width_bits}"))
    if cfg.data_width_bits > 32:
        v.append(("data_width_bits",
                  f"must be at most 32, got {cfg.data_width_bits}"))
    for name in ("local_depth", "acc_depth", "dram0_depth", "dram1_depth"):
        if getattr(cfg, name) <= 0:
            v.append((name, f"must be positive, got {getattr(cfg, name)}"))
    if cfg.clock_mhz <= 0:
        v.append(("clock_mhz", f"must be positive, got {cfg.clock_mhz}"))
    if cfg.dram_latency_factor < 1:
        v.append(("dram_latency_factor",
                  f"must be at least 1, got {cfg.dram_latency_factor}"))
    if cfg.simd_lanes != cfg.array_size:
        v.append(("simd_lanes",
                  f"must equal array_size ({cfg.array_size}), "
                  f"got {cfg.simd_lanes}"))
    return v


def require_valid(cfg):
    violations = validate_arch(cfg)
    if violations:
        detail = "; ".join(f"{f}: {m}" for f, m in violations)
        raise ArchConfigError(f"invalid architecture: {detail}")


@dataclass(frozen=True)
class ResourceBudget:
    """Available device resources."""

    lut: int
    ff: int
    bram: int
    io: int
    dsp: int


# Zynq-7000 class device, the reference deployment target.
ZYNQ7000_BUDGET = ResourceBudget(lut=74000, ff=106400, bram=3300, io=150, dsp=160)

_RESOURCES = ("lut", "ff", "bram", "io", "dsp")


@dataclass(frozen=True)
class ResourceEstimate:
    lut: int
    ff: int
    bram: int
    io: int
    dsp: int

    def as_dict(self):
        return {name: getattr(self, name) for name in _RESOURCES}


def _ceil_div(num, den):
    return -(-num // den)


def estimate_resources(cfg):
    """Estimate device usage for a configuration (raises if cfg is invalid)."""
    require_valid(cfg)
    pes = cfg.array_size * cfg.array_size
    bits = cfg.data_width_bits * pes
    lut = _LUT_BASE + _ceil_div(_LUT_PER_BIT_PE[0] * bits, _LUT_PER_BIT_PE[1])
    ff = _FF_BASE + _ceil_div(_FF_PER_BIT_PE[0] * bits, _FF_PER_BIT_PE[1])
    dsp = _ceil_div(_DSP_PER_BIT_PE[0] * bits, _DSP_PER_BIT_PE[1])
    array_bits = (cfg.local_depth + cfg.acc_depth) * cfg.array_size * cfg.data_width_bits
    bram = _ceil_div(array_bits, _BRAM_BITS_PER_UNIT) + _BRAM_BASE
    return ResourceEstimate(lut=lut, ff=ff, bram=bram, io=_IO_PINS, dsp=dsp)


def utilization_pct(estimate, budget):
    """Percent utilization per resource, rounded half-up to 2 decimals."""
    out = {}
    for name in _RESOURCES:
        used = getattr(estimate, name)
        avail = getattr(budget, name)
        pct = (Decimal(100 * used) / Decimal(avail)).quantize(
            Decimal("0.01"), rounding=ROUND_HALF_UP)
        out[name] = float(pct)
    return out


def check_fit(estimate, budget):
    """Return a list of (resource, used, available) overflows; empty fits."""
    over = []
    for name in _RESOURCES:
        used = getattr(estimate, name)
        avail = getattr(budget, name)
        if used > avail:
            over.append((name, used, avail))
    return over


# ------------------------------------------------------------- file formats

def _parse_kv_lines(text, path):
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ArchConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in body.split("=", 1))
        if key in pairs:
            raise ArchConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        pairs[key] = (value, lineno)
    return pairs


def _typed(pairs, required, path):
    unknown = set(pairs) - set(required)
    if unknown:
        raise ArchConfigError(
            f"{path}: unknown keys: {', '.join(sorted(unknown))}")
    missing = set(required) - set(pairs)
    if missing:
        raise ArchConfigError(
            f"{path}: missing keys: {', '.join(sorted(missing))}")
    out = {}
    for key in required:
        value, lineno = pairs[key]
        try:
            out[key] = int(value)
        except ValueError:
            raise ArchConfigError(
                f"{path}:{lineno}: {key} must be an integer, got {value!r}")
    return out


def load_arch_config(path):
    """Parse a 'key = value' architecture file into an ArchConfig."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    values = _typed(_parse_kv_lines(text, path), _ARCH_FIELDS, path)
    cfg = ArchConfig(**values)
    require_valid(cfg)
    return cfg


def load_budget(path):
    """Parse a 'key = value' resource budget file into a ResourceBudget."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    values = _typed(_parse_kv_lines(text, path), _RESOURCES, path)
    return ResourceBudget(**values)
