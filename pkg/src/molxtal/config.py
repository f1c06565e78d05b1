"""Search configuration documents.

The YAML layout follows the field names of the original search script:
top-level keys such as ``sgs_to_search``, ``num_samples`` and
``init_target_cp`` plus an ``opt`` list with one mapping per stage.
Unknown keys are logged and ignored so that newer config files still load.
"""

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

log = logging.getLogger(__name__)

# keys the original script understands but that change nothing here
_INERT_TOP = {
    "device", "score_model_checkpoint", "mol_seed",
    "sampling_mode", "mols_to_sample", "zp_to_search", "grow_batch_size",
    "init_sample_method", "init_sample_reduced",
}
_INERT_STAGE = {"enforce_niggli", "show_tqdm"}


class ConfigError(ValueError):
    pass


@dataclass
class OptStage:
    optim_target: str = "silu"
    target_packing_coeff: float = 0.7
    init_lr: float = 1e-3
    optimizer: str = "rprop"
    anneal_lr: bool = False
    grad_norm_clip: float = 0.1
    convergence_eps: float = 1e-3
    max_num_steps: int = 500
    density_weight: float = 100.0
    aux_length_weight: float = 1.0
    compression_factor: float = None
    cutoff: float = None

    def __post_init__(self):
        self.optim_target = str(self.optim_target).lower()
        self.optimizer = str(self.optimizer).lower()
        if self.optim_target not in ("silu", "lj"):
            raise ConfigError(f"optim_target must be 'silu' or 'lj', got {self.optim_target!r}")
        if self.optimizer not in ("rprop", "sgd"):
            raise ConfigError(f"optimizer must be 'rprop' or 'sgd', got {self.optimizer!r}")
        if self.init_lr <= 0:
            raise ConfigError("init_lr must be positive")
        if int(self.max_num_steps) < 1:
            raise ConfigError("max_num_steps must be at least 1")
        self.max_num_steps = int(self.max_num_steps)
        if self.convergence_eps <= 0:
            raise ConfigError("convergence_eps must be positive")
        if not 0 < self.target_packing_coeff < 1:
            raise ConfigError("target_packing_coeff must lie in (0, 1)")
        if self.cutoff is None:
            self.cutoff = 6.0 if self.optim_target == "silu" else 10.0


def silu_stage(target_cp=0.7, **kw):
    base = dict(optim_target="silu", target_packing_coeff=target_cp, init_lr=1e-3, optimizer="rprop",
                anneal_lr=False, grad_norm_clip=0.1, convergence_eps=1e-3, max_num_steps=500)
    base.update(kw)
    return OptStage(**base)


def lj_stage(target_cp=0.7, **kw):
    base = dict(optim_target="lj", target_packing_coeff=target_cp, init_lr=1.0, optimizer="sgd",
                anneal_lr=True, grad_norm_clip=0.01, convergence_eps=1e-4, max_num_steps=50,
                aux_length_weight=0.0)
    base.update(kw)
    return OptStage(**base)


@dataclass
class SearchConfig:
    space_groups: list = field(default_factory=lambda: [1])
    num_samples: int = 10
    batch_size: int = 100
    seed: int = 0
    init_target_cp: float = 0.7
    stages: list = None
    output_path: str = None
    workers: int = 1
    mol_path: str = None
    out_dir: str = None
    run_name: str = "search"

    def __post_init__(self):
        if self.stages is None:
            self.stages = [silu_stage(self.init_target_cp), lj_stage(self.init_target_cp)]
        if int(self.num_samples) < 1:
            raise ConfigError("num_samples must be at least 1")
        if not self.stages:
            raise ConfigError("at least one optimization stage is required")
        if not self.space_groups:
            raise ConfigError("sgs_to_search must name at least one space group")
        if not 0 < self.init_target_cp < 1:
            raise ConfigError("init_target_cp must lie in (0, 1)")
        if self.output_path is None and self.out_dir is not None:
            self.output_path = str(Path(self.out_dir) / f"{self.run_name}.jsonl")
        self.num_samples = int(self.num_samples)
        self.batch_size = max(1, int(self.batch_size))


_STAGE_ALIASES = {"optimizer_func": "optimizer", "lambda_cp": "density_weight", "lambda_len": "aux_length_weight"}
_TOP_ALIASES = {
    "sgs_to_search": "space_groups",
    "opt_seed": "seed",
    "out_path": "output_path",
    "output": "output_path",
}


def _stage_from_dict(d, index):
    known = {f.name for f in fields(OptStage)}
    kw = {}
    for key, value in d.items():
        name = _STAGE_ALIASES.get(key, key)
        if name in known:
            kw[name] = value
        elif key in _INERT_STAGE:
            log.info("stage %d: %r accepted but has no effect", index, key)
        else:
            log.warning("stage %d: unknown config key %r ignored", index, key)
    if "compression_factor" in kw:
        log.info("stage %d: compression_factor=%r accepted but inert", index, kw["compression_factor"])
    return OptStage(**kw)


def config_from_dict(d):
    if not isinstance(d, dict):
        raise ConfigError("config document must be a mapping")
    known = {f.name for f in fields(SearchConfig)}
    kw = {}
    stages = None
    for key, value in d.items():
        if key == "opt":
            if not isinstance(value, list):
                raise ConfigError("'opt' must be a list of stage mappings")
            stages = [_stage_from_dict(s, i) for i, s in enumerate(value)]
            continue
        name = _TOP_ALIASES.get(key, key)
        if name in known:
            kw[name] = value
        elif key in _INERT_TOP:
            log.info("config key %r accepted but has no effect", key)
        else:
            log.warning("unknown config key %r ignored", key)
    if "space_groups" in kw and not isinstance(kw["space_groups"], list):
        kw["space_groups"] = [kw["space_groups"]]
    if stages is not None:
        kw["stages"] = stages
    return SearchConfig(**kw)


def load_config(path_or_text):
    text = Path(path_or_text).read_text() if "\n" not in str(path_or_text) else path_or_text
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    return config_from_dict(doc)
