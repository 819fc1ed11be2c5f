"""Benchmark runner: embed, attack, extract and score a corpus; emit reports.

The work list is one unit per (image, method); each unit embeds once and
runs every configured attack on the same watermarked plane. Every random
choice inside a unit is keyed by (global seed, image index, method,
attack label), so results do not depend on how units are scheduled.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .. import _rng
from ..diffusion import AttackConfig, AttackPipeline, sadre_attack, start_step
from ..metrics import psnr, ssim, wasserstein
from ..perturb import DEFAULT_GRID, SigmaSearchConfig
from ..saliency import SaliencyConfig
from ..watermarkers import METHODS, EmbedConfig, Payload, bra, embed, extract
from .attacks import jpeg_attack
from .corpus import CorpusImage, load_corpus, synth_corpus

log = logging.getLogger(__name__)

FORMATS = ("csv", "json", "md")
CSV_FIELDS = ("method", "attack", "n", "psnr_mean", "psnr_std", "ssim_mean", "ssim_std",
              "wp_mean", "wp_std", "bra_mean", "bra_std")
LOG_FIELDS = ("image", "method", "attack", "psnr", "ssim", "wp", "bra", "sigma", "t_star",
              "mask_mean", "psnr_vs_clean")

# keys a "sadre" attack entry may carry, mapped onto AttackConfig / sub-configs
_SADRE_KEYS = {
    "sigma", "sigma_mode", "grid", "lambda_w", "search_mode", "noise_family", "poisson_rate",
    "steps", "beta_min", "beta_max", "lambda_s", "lo_pct", "hi_pct", "kappa",
}


class ConfigError(ValueError):
    pass


# --- attack specs ----------------------------------------------------------------

@dataclass(frozen=True)
class AttackSpec:
    kind: str  # none | jpeg | sadre | regen
    label: str
    quality: int = 50
    sigma: float | str | None = None  # regen: number or "match"
    params: dict = field(default_factory=dict)

    def attack_config(self, seed: int) -> AttackConfig:
        return sadre_config(self.params, seed)


def sadre_config(params: dict, seed: int) -> AttackConfig:
    """Build an :class:`AttackConfig` from a flat parameter dict."""
    unknown = set(params) - _SADRE_KEYS
    if unknown:
        raise ConfigError(f"unknown sadre parameter(s): {sorted(unknown)}")
    mode = params.get("sigma_mode", "adaptive" if params.get("sigma") is None else "fixed")
    if mode not in ("fixed", "adaptive"):
        raise ConfigError("sigma_mode must be 'fixed' or 'adaptive'")
    sigma = params.get("sigma")
    if mode == "fixed" and sigma is None:
        raise ConfigError("sigma_mode 'fixed' needs a sigma")
    search = SigmaSearchConfig(
        grid=tuple(params.get("grid", DEFAULT_GRID)),
        lambda_w=params.get("lambda_w", 0.1),
        mode=params.get("search_mode", "blind"),
    )
    sal = SaliencyConfig(
        lo_pct=params.get("lo_pct", 50.0),
        hi_pct=params.get("hi_pct", 95.0),
        kappa=params.get("kappa", 1.0),
    )
    return AttackConfig(
        sigma=float(sigma) if mode == "fixed" else None,
        search=search,
        noise_family=params.get("noise_family", "laplace"),
        poisson_rate=params.get("poisson_rate", 10.0),
        seed=seed,
        steps=params.get("steps", 50),
        beta_min=params.get("beta_min", 1e-4),
        beta_max=params.get("beta_max", 0.2),
        lambda_s=params.get("lambda_s", 1.5),
        saliency=sal,
    )


def parse_attack(entry) -> AttackSpec:
    """Accepts ``"none"``/``"jpeg"``/... or a dict with ``name`` plus parameters."""
    if isinstance(entry, str):
        entry = {"name": entry}
    if not isinstance(entry, dict) or "name" not in entry:
        raise ConfigError(f"attack entry must be a name or an object with 'name': {entry!r}")
    entry = dict(entry)
    kind = str(entry.pop("name")).lower()
    label = entry.pop("label", None)
    if kind == "none":
        if entry:
            raise ConfigError(f"attack 'none' takes no parameters: {sorted(entry)}")
        return AttackSpec("none", label or "none")
    if kind == "jpeg":
        q = entry.pop("quality", 50)
        if entry:
            raise ConfigError(f"unknown jpeg parameter(s): {sorted(entry)}")
        if not isinstance(q, int) or not 1 <= q <= 100:
            raise ConfigError(f"jpeg quality must be an integer in 1..100, got {q!r}")
        return AttackSpec("jpeg", label or f"jpeg{q}", quality=q)
    if kind == "sadre":
        sadre_config(entry, 0)  # validate now, not mid-run
        return AttackSpec("sadre", label or "sadre", params=entry)
    if kind == "regen":
        sigma = entry.pop("sigma", "match")
        if sigma != "match" and not (isinstance(sigma, (int, float)) and sigma > 0):
            raise ConfigError(f"regen sigma must be > 0 or \"match\", got {sigma!r}")
        if sigma != "match":
            entry["sigma"] = float(sigma)
            entry["sigma_mode"] = "fixed"
        sadre_config(entry, 0)
        entry.pop("sigma", None)
        entry.pop("sigma_mode", None)
        return AttackSpec("regen", label or "regen", sigma=sigma, params=entry)
    raise ConfigError(f"unknown attack {kind!r}; choose from none, jpeg, sadre, regen")


# --- config ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchConfig:
    corpus_dir: str | None = None  # None -> synthetic corpus
    image_size: int = 256
    n_images: int = 20
    methods: tuple[str, ...] = METHODS
    attacks: tuple = ("none", {"name": "jpeg", "quality": 50}, "sadre", {"name": "regen", "sigma": "match"})
    seed: int = 0
    payload_len: int = 32
    output: str = "bench_out"
    formats: tuple[str, ...] = FORMATS
    workers: int = 1
    wp_order: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        d = dict(d)
        for key in ("methods", "attacks", "formats"):
            if key in d:
                if not isinstance(d[key], list):
                    raise ConfigError(f"{key} must be a list")
                d[key] = tuple(d[key])
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "BenchConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise FileNotFoundError(f"cannot read config {path}: {exc.strerror}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def validate(self):
        if self.image_size < 64:
            raise ConfigError("image_size must be >= 64")
        if self.n_images < 1:
            raise ConfigError("n_images must be >= 1")
        if not self.methods:
            raise ConfigError("need at least one method")
        for m in self.methods:
            EmbedConfig(m)
        specs = self.attack_specs()
        if not specs:
            raise ConfigError("need at least one attack")
        labels = [s.label for s in specs]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate attack labels: {labels}")
        if any(s.kind == "regen" and s.sigma == "match" for s in specs) and \
                sum(s.kind == "sadre" for s in specs) != 1:
            raise ConfigError("regen with sigma \"match\" needs exactly one sadre attack")
        bad = set(self.formats) - set(FORMATS)
        if bad or not self.formats:
            raise ConfigError(f"formats must be a non-empty subset of {FORMATS}")
        if self.payload_len < 1 or self.workers < 1:
            raise ConfigError("payload_len and workers must be >= 1")
        if self.wp_order not in (1, 2):
            raise ConfigError("wp_order must be 1 or 2")

    def attack_specs(self) -> list[AttackSpec]:
        return [parse_attack(a) for a in self.attacks]


# --- running --------------------------------------------------------------------------

@dataclass
class BenchRow:
    method: str
    attack: str
    n: int
    psnr_mean: float
    psnr_std: float
    ssim_mean: float
    ssim_std: float
    wp_mean: float
    wp_std: float
    bra_mean: float
    bra_std: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in CSV_FIELDS}


@dataclass
class BenchResult:
    rows: list[BenchRow]
    records: list[dict]
    skipped: list[str]
    config: BenchConfig


def _corpus(cfg: BenchConfig) -> tuple[list[CorpusImage], list[str]]:
    if cfg.corpus_dir is None:
        return synth_corpus(cfg.n_images, cfg.image_size, cfg.seed), []
    return load_corpus(cfg.corpus_dir, cfg.image_size, cfg.n_images)


def _record(name, method, attack, ref, x_hat, clean, payload, ecfg, p, **extra) -> dict:
    rec = {
        "image": name,
        "method": method,
        "attack": attack,
        "psnr": psnr(ref, x_hat),
        "ssim": ssim(ref, x_hat),
        "wp": wasserstein(ref, x_hat, p),
        "bra": bra(extract(x_hat, ecfg), payload),
        "sigma": None,
        "t_star": None,
        "mask_mean": None,
        "psnr_vs_clean": psnr(clean, x_hat),
    }
    rec.update(extra)
    return rec


def _run_unit(idx: int, image: CorpusImage, method: str, specs: list[AttackSpec], cfg: BenchConfig) -> list[dict]:
    seed = cfg.seed
    ecfg = EmbedConfig(method, seed=_rng.derive_seed(seed, idx, method, "embed"), payload_len=cfg.payload_len)
    payload = Payload.random(cfg.payload_len, _rng.derive_seed(seed, idx, method, "payload"))
    x = image.plane
    x_w = embed(x, payload, ecfg)

    def detector(x_hat):
        return bra(extract(x_hat, ecfg), payload)

    out = []
    matched = {}  # sadre's chosen sigma and config, for regen "match"
    # sadre first so a matched regen can reuse its sigma; output order follows the config
    order = sorted(range(len(specs)), key=lambda i: specs[i].kind != "sadre")
    results = {}
    for i in order:
        spec = specs[i]
        args = (image.name, method, spec.label)
        if spec.kind == "none":
            # attack-free row: fidelity of the embedding itself
            results[i] = _record(*args, x, x_w, x, payload, ecfg, cfg.wp_order)
        elif spec.kind == "jpeg":
            results[i] = _record(*args, x_w, jpeg_attack(x_w, spec.quality), x, payload, ecfg, cfg.wp_order)
        elif spec.kind == "sadre":
            acfg = spec.attack_config(_rng.derive_seed(seed, idx, method, spec.label))
            x_hat, trace = sadre_attack(x_w, acfg, detector if acfg.search.mode == "oracle" else None)
            matched = {"sigma": trace.sigma, "seed": acfg.seed}
            results[i] = _record(*args, x_w, x_hat, x, payload, ecfg, cfg.wp_order,
                                 sigma=trace.sigma, t_star=trace.t_star, mask_mean=trace.mask_mean)
        else:
            if spec.sigma == "match":
                sigma, rseed = matched["sigma"], matched["seed"]
            else:
                sigma, rseed = float(spec.sigma), _rng.derive_seed(seed, idx, method, spec.label)
            params = {**spec.params, "sigma": sigma, "sigma_mode": "fixed"}
            acfg = AttackConfig(**{**sadre_config(params, rseed).__dict__, "mask_mode": "ones"})
            pipe = AttackPipeline(x_w, acfg)
            x_hat = pipe.run(sigma)
            results[i] = _record(*args, x_w, x_hat, x, payload, ecfg, cfg.wp_order,
                                 sigma=sigma, t_star=start_step(sigma, pipe.sched), mask_mean=1.0)
    for i in range(len(specs)):
        out.append(results[i])
    return out


def _mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if np.isinf(v).any():
        return math.inf, (0.0 if np.isinf(v).all() else math.inf)
    return float(v.mean()), float(v.std())


def aggregate(records: list[dict], methods, labels) -> list[BenchRow]:
    """Per (method, attack) mean and population std, rows sorted by (method, attack)."""
    rows = []
    for method in sorted(set(methods)):
        for label in sorted(set(labels)):
            sel = [r for r in records if r["method"] == method and r["attack"] == label]
            if not sel:
                continue
            stats = []
            for key in ("psnr", "ssim", "wp", "bra"):
                stats.extend(_mean_std([r[key] for r in sel]))
            rows.append(BenchRow(method, label, len(sel), *stats))
    return rows


def run_bench(cfg: BenchConfig) -> BenchResult:
    cfg.validate()
    images, skipped = _corpus(cfg)
    specs = cfg.attack_specs()
    methods = [EmbedConfig(m).method for m in cfg.methods]
    units = [(i, img, m) for i, img in enumerate(images) for m in methods]
    log.info("bench: %d images x %d methods x %d attacks", len(images), len(methods), len(specs))
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            per_unit = list(pool.map(lambda u: _run_unit(*u, specs, cfg), units))
    else:
        per_unit = [_run_unit(*u, specs, cfg) for u in units]
    records = [r for unit in per_unit for r in unit]
    rows = aggregate(records, methods, [s.label for s in specs])
    return BenchResult(rows, records, skipped, cfg)


# --- reports ----------------------------------------------------------------------------

def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return f"{v:.4f}"


def _json_num(v):
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    if not math.isfinite(v):
        return fmt(v)
    return round(v, 4)


def rows_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([r.method, r.attack] + [fmt(getattr(r, k)) for k in CSV_FIELDS[2:]])
    return buf.getvalue()


def records_csv(records: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_FIELDS)
    for r in records:
        w.writerow([r[k] if k in ("image", "method", "attack") else fmt(r[k]) for k in LOG_FIELDS])
    return buf.getvalue()


def rows_json(rows: list[BenchRow], skipped=()) -> str:
    doc = {
        "fidelity_reference": "x_w for attack rows; clean x for attack=none",
        "skipped": list(skipped),
        "rows": [{k: (v if k in ("method", "attack") else _json_num(v)) for k, v in r.as_dict().items()}
                 for r in rows],
    }
    return json.dumps(doc, indent=2) + "\n"


def rows_markdown(rows: list[BenchRow], skipped=()) -> str:
    lines = [
        "Fidelity (PSNR, SSIM, W_p) is measured against the watermarked input for attack rows "
        "and against the clean image for the attack-free row. "
        "Higher PSNR/SSIM means better quality; lower W_p/BRA means a stronger attack.",
        "",
    ]
    if skipped:
        lines += [f"Skipped {len(skipped)} unreadable corpus file(s): {', '.join(skipped)}", ""]
    lines.append("| Method | Attack | n | PSNR | SSIM | W_p | BRA |")
    lines.append("|---|---|---|---|---|---|---|")
    for r in rows:
        cells = [f"{fmt(m)} ± {fmt(s)}" for m, s in (
            (r.psnr_mean, r.psnr_std), (r.ssim_mean, r.ssim_std), (r.wp_mean, r.wp_std), (r.bra_mean, r.bra_std))]
        lines.append(f"| {r.method} | {r.attack} | {r.n} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def emit_report(rows: list[BenchRow], formats, path, records=None, skipped=()) -> list[Path]:
    """Write ``report.<fmt>`` files (and ``per_image.csv`` when records are given) into ``path``."""
    if not rows:
        raise ValueError("no rows to report")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    writers = {"csv": lambda: rows_csv(rows), "json": lambda: rows_json(rows, skipped),
               "md": lambda: rows_markdown(rows, skipped)}
    written = []
    for f in formats:
        if f not in writers:
            raise ValueError(f"unknown report format {f!r}")
        target = out / f"report.{f}"
        target.write_text(writers[f]())
        written.append(target)
    if records is not None:
        target = out / "per_image.csv"
        target.write_text(records_csv(records))
        written.append(target)
    return written
