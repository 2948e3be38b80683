"""Flat key=value configuration with a closed key schema.

One ``key = value`` per line, ``#`` starts a comment. Every key the toolkit
understands is listed in DEFAULTS with its default value; unknown keys are
rejected (all of them reported at once) so typos never silently fall back to
a default.
"""

from collections import OrderedDict


class ConfigError(ValueError):
    """Raised on unknown keys or unparseable values."""

    def __init__(self, message, keys=None):
        super().__init__(message)
        self.keys = list(keys or [])


# Default for every recognized key. The value's Python type decides how the
# textual value is coerced. Comma-lists are kept as plain strings and split
# by their consumers.
DEFAULTS = OrderedDict(
    [
        # shared
        ("seed", 0),
        ("image_size", 64),
        # dataset generation: counts per (split x method)
        ("train_real", 240),
        ("train_full_blend", 80),
        ("train_face_replace", 80),
        ("train_expression_transfer", 80),
        ("train_geometry_warp", 80),
        ("val_real", 60),
        ("val_full_blend", 20),
        ("val_face_replace", 20),
        ("val_expression_transfer", 20),
        ("val_geometry_warp", 20),
        ("test_real", 120),
        ("test_full_blend", 40),
        ("test_face_replace", 40),
        ("test_expression_transfer", 40),
        ("test_geometry_warp", 40),
        ("identity_pool_size", 0),  # 0 = one fresh identity pair per sample
        # diffusion backbone (frozen latent diffusion stand-in)
        ("timesteps", 1000),
        ("beta_start", 1e-4),
        ("beta_end", 0.02),
        ("latent_channels", 4),
        ("vae_widths", "32,48,64"),
        ("vae_epochs", 30),
        ("vae_lr", 2e-3),
        ("vae_kl_weight", 1e-4),
        ("vae_batch_size", 64),
        ("unet_widths", "32,64,128"),
        ("unet_res_blocks", 2),
        ("eps_epochs", 40),
        ("eps_lr", 1e-3),
        ("eps_batch_size", 64),
        ("sample_steps", 50),
        # detector
        ("backbone", "tiny_cnn"),
        # feature transformation
        ("filter_channels", 128),
        ("filter_heads", 4),
        ("filter_channel_reduction", 4),
        ("filter_spatial_kernel", 7),
        ("weight_mlp_widths", "64,64,32,16"),
        # guide module
        ("shared_copy", True),
        ("guide_stage_mask", ""),  # debug: comma 0/1 per injection point
        ("w_override", ""),  # debug: float, or empty for learned weights
        # training
        ("mode", "diffusionfake"),
        ("lambda_s", 0.7),
        ("lambda_t", 1.0),
        ("learning_rate", 1e-4),
        ("batch_size", 32),
        ("epochs", 5),
        ("augment", True),
        ("use_pretrained_ldm", True),
        ("use_filter", True),
        ("use_weight", True),
        ("train_families", ""),  # comma list of fake methods; empty = all four
    ]
)

_BOOL_WORDS = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _coerce(key, text):
    default = DEFAULTS[key]
    text = text.strip()
    try:
        if isinstance(default, bool):
            word = text.lower()
            if word not in _BOOL_WORDS:
                raise ValueError(f"expected boolean, got {text!r}")
            return _BOOL_WORDS[word]
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}", keys=[key]) from None


def parse_config(text):
    """Parse flat key=value text into a full config dict (defaults filled in)."""
    cfg = dict(DEFAULTS)
    unknown = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            unknown.append(key)
            continue
        cfg[key] = _coerce(key, value)
    if unknown:
        raise ConfigError(
            "unknown config key(s): " + ", ".join(sorted(set(unknown))), keys=sorted(set(unknown))
        )
    return cfg


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def apply_overrides(cfg, pairs):
    """Apply repeatable ``--set key=value`` overrides; unknown keys rejected together."""
    out = dict(cfg)
    unknown = []
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must look like key=value, got {pair!r}")
        key, value = (part.strip() for part in pair.split("=", 1))
        if key not in DEFAULTS:
            unknown.append(key)
            continue
        out[key] = _coerce(key, value)
    if unknown:
        raise ConfigError(
            "unknown config key(s): " + ", ".join(sorted(set(unknown))), keys=sorted(set(unknown))
        )
    return out


def format_config(cfg):
    """Serialize a config dict in stable (DEFAULTS) key order."""
    lines = []
    for key in DEFAULTS:
        value = cfg[key]
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_config(cfg))


def int_list(cfg, key):
    text = cfg[key].strip()
    if not text:
        return []
    return [int(part) for part in text.split(",")]
