"""Pipeline configuration, stored as a flat JSON object.

Every key is optional; missing keys take the defaults below, and unknown
keys are rejected. Schema (key: type, default, allowed range):

    embedding        str    "nu1"          raw | nu1 | nu2 | nu3 | sqrt | von_mises
    epsilon          float  1e-10          > 0
    pca_dim          int    500            >= 0, 0 disables PCA
    pca_order        str    "embed_first"  embed_first | pca_first
    model            str    "gmm"          gmm | dmm | mfa
    K                int    null           >= 1; null -> 100 (gmm, dmm) or 50 (mfa)
    R                int    10             >= 0 and < descriptor dimension
    shared_noise     bool   true           MFA noise shared across components
    encoder          str    null           null -> gmm_mu | dmm_alpha | mfa_lambda
    power            float  0.5            (0, 1]
    em_max_iter      int    200            >= 1
    em_tol           float  1e-6           >= 0
    reg              float  1e-4           >= 0, classifier L2 strength
    clf_epochs       int    20             >= 0
    lambda           float  1.0            >= 0, MFAFSNet lambda1 = lambda2
    lr_classifier    float  1e-3           >= 0
    lr_other         float  1e-5           >= 0
    momentum         float  0.9            [0, 1)
    weight_decay     float  5e-4           >= 0
    ft_epochs        int    10             >= 0
    batch_size       int    16             >= 1
    seed             int    0              >= 0
    ablation         bool   false          also run the scaling x assignment table
"""

import json
from dataclasses import asdict, dataclass, fields, replace

from .descriptors import EMBEDDINGS

MODELS = ("gmm", "dmm", "mfa")
ENCODERS = {
    "gmm": ("gmm_mu", "gmm_sigma"),
    "dmm": ("dmm_alpha",),
    "mfa": ("mfa_lambda", "mfa_mu", "mfa_fv_mu", "mfa_fv_lambda", "mfa_mu_lambda"),
}
DEFAULT_ENCODER = {"gmm": "gmm_mu", "dmm": "dmm_alpha", "mfa": "mfa_lambda"}
DEFAULT_K = {"gmm": 100, "dmm": 100, "mfa": 50}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    embedding: str = "nu1"
    epsilon: float = 1e-10
    pca_dim: int = 500
    pca_order: str = "embed_first"
    model: str = "gmm"
    K: int | None = None
    R: int = 10
    shared_noise: bool = True
    encoder: str | None = None
    power: float = 0.5
    em_max_iter: int = 200
    em_tol: float = 1e-6
    reg: float = 1e-4
    clf_epochs: int = 20
    lambda_: float = 1.0
    lr_classifier: float = 1e-3
    lr_other: float = 1e-5
    momentum: float = 0.9
    weight_decay: float = 5e-4
    ft_epochs: int = 10
    batch_size: int = 16
    seed: int = 0
    ablation: bool = False

    def __post_init__(self):
        _check_choice("embedding", self.embedding, EMBEDDINGS)
        _check_choice("pca_order", self.pca_order, ("embed_first", "pca_first"))
        _check_choice("model", self.model, MODELS)
        if self.encoder is not None:
            _check_choice("encoder", self.encoder, ENCODERS[self.model])
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if not 0.0 < self.power <= 1.0:
            raise ConfigError("power must lie in (0, 1]")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.K is not None and self.K < 1:
            raise ConfigError("K must be at least 1")
        if self.batch_size < 1 or self.em_max_iter < 1:
            raise ConfigError("batch_size and em_max_iter must be at least 1")
        for name in ("pca_dim", "R", "em_tol", "reg", "clf_epochs", "lambda_", "lr_classifier",
                     "lr_other", "weight_decay", "ft_epochs", "seed"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{_key(name)} must be nonnegative")
        if self.pca_order == "pca_first" and self.embedding != "raw":
            raise ConfigError(
                f"pca_first leaves the simplex, so the {self.embedding} embedding is undefined; "
                "use embed_first"
            )
        if self.model == "dmm" and self.embedding != "raw":
            raise ConfigError("the Dirichlet mixture is fitted on the simplex; set embedding to raw")

    @property
    def components(self):
        return self.K if self.K is not None else DEFAULT_K[self.model]

    @property
    def encoder_variant(self):
        return self.encoder or DEFAULT_ENCODER[self.model]

    def to_dict(self):
        return {_key(k): v for k, v in asdict(self).items()}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def _key(name):
    return "lambda" if name == "lambda_" else name


def _field(key):
    return "lambda_" if key == "lambda" else key


def _check_choice(name, value, allowed):
    if value not in allowed:
        raise ConfigError(f"{name} must be one of {list(allowed)}, got {value!r}")


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(key, value):
    name = _field(key)
    kind = _TYPES[name]
    if value is None:
        if "None" in str(kind):
            return None
        raise ConfigError(f"{key} may not be null")
    if "bool" in str(kind):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false")
        return value
    if "int" in str(kind):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer")
        return value
    if "float" in str(kind):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string")
    return value


def config_from_dict(doc, base=None):
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known = {_key(n) for n in _TYPES}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    values = {_field(k): _coerce(k, v) for k, v in doc.items()}
    return replace(base or PipelineConfig(), **values)


def parse_override(text):
    """``key=value`` with value parsed as JSON, falling back to a bare string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path=None, overrides=()):
    doc = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
    cfg = config_from_dict(doc)
    extra = dict(parse_override(o) for o in overrides)
    return config_from_dict(extra, cfg) if extra else cfg
