//! Flat JSON training configuration with presets and CLI overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use slide_core::kernels::KernelError;
use slide_core::nn::NetworkSpec;
use slide_core::quant::apply_mode;
use slide_core::{
    Activation, AdamHyper, HashFamilyParams, LaneConfig, LayerConfig, QuantMode, Rounding,
    SparsityConfig, StorageOrder,
};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HashKind {
    Dwta,
    Simhash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    Row,
    Col,
}

impl From<Order> for StorageOrder {
    fn from(o: Order) -> Self {
        match o {
            Order::Row => StorageOrder::RowMajor,
            Order::Col => StorageOrder::ColMajor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingKind {
    Truncate,
    NearestEven,
}

impl From<RoundingKind> for Rounding {
    fn from(r: RoundingKind) -> Self {
        match r {
            RoundingKind::Truncate => Rounding::Truncate,
            RoundingKind::NearestEven => Rounding::NearestEven,
        }
    }
}

/// Every key of the config file. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub preset: Preset,

    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub one_based: bool,
    /// Needed only when the data files carry no header line.
    pub input_dim: Option<usize>,
    pub label_dim: Option<usize>,

    /// Width of each hidden layer.
    pub hidden: usize,
    pub hidden_layers: usize,
    pub hidden_order: Order,
    pub hidden_lsh: bool,

    pub use_lsh: bool,
    pub hash_family: HashKind,
    pub k: u32,
    pub l: u32,
    pub bin_size: u32,
    pub densify_cap: u32,
    pub min_active: usize,

    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub bias_correction: bool,

    pub batch_size: usize,
    pub epochs: usize,
    pub threads: usize,
    pub hogwild: bool,
    pub rehash_period: usize,
    pub rebuild_every: usize,
    pub seed: u64,

    #[serde(with = "quant_mode")]
    pub bf16_mode: QuantMode,
    pub bf16_rounding: RoundingKind,
    pub lane_enabled: bool,
    pub lane_width: usize,

    pub metrics_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
}

mod quant_mode {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use slide_core::QuantMode;

    pub fn serialize<S: Serializer>(m: &QuantMode, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(m.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<QuantMode, D::Error> {
        let s = String::deserialize(d)?;
        s.parse()
            .map_err(|e| D::Error::custom(format!("bf16_mode `{s}`: {e}")))
    }
}

impl TrainConfig {
    /// Sized for a laptop and CI: small hidden layer, few tables.
    pub fn desk() -> Self {
        Self {
            preset: Preset::Desk,
            train_path: None,
            test_path: None,
            one_based: false,
            input_dim: None,
            label_dim: None,
            hidden: 64,
            hidden_layers: 1,
            hidden_order: Order::Col,
            hidden_lsh: false,
            use_lsh: true,
            hash_family: HashKind::Dwta,
            k: 6,
            l: 4,
            bin_size: HashFamilyParams::DEFAULT_BIN_SIZE,
            densify_cap: HashFamilyParams::DEFAULT_DENSIFY_CAP,
            min_active: 25,
            lr: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            bias_correction: true,
            batch_size: 64,
            epochs: 10,
            threads: 1,
            hogwild: false,
            rehash_period: 50,
            rebuild_every: 20,
            seed: 0,
            bf16_mode: QuantMode::None,
            bf16_rounding: RoundingKind::Truncate,
            lane_enabled: true,
            lane_width: 16,
            metrics_path: None,
            checkpoint_path: None,
        }
    }

    /// Full-size extreme-classification settings.
    pub fn full() -> Self {
        Self {
            preset: Preset::Full,
            hidden: 128,
            k: 6,
            l: 400,
            min_active: 1024,
            lr: 1e-4,
            batch_size: 256,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            hogwild: true,
            ..Self::desk()
        }
    }

    pub fn from_preset(p: Preset) -> Self {
        match p {
            Preset::Desk => Self::desk(),
            Preset::Full => Self::full(),
        }
    }

    /// Parse a flat JSON object. Keys not given take the value of the
    /// chosen `preset` (default `desk`).
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(ConfigError::Invalid("top level must be an object".into()));
        };
        Self::from_map(map)
    }

    fn from_map(map: Map<String, Value>) -> Result<Self, ConfigError> {
        let preset = match map.get("preset") {
            Some(p) => serde_json::from_value(p.clone())
                .map_err(|e| ConfigError::Invalid(format!("preset: {e}")))?,
            None => Preset::Desk,
        };
        let Value::Object(mut full) = serde_json::to_value(Self::from_preset(preset))
            .expect("config serializes")
        else {
            unreachable!()
        };
        for (k, v) in map {
            if !full.contains_key(&k) {
                return Err(ConfigError::Invalid(format!("unknown key `{k}`")));
            }
            full.insert(k, v);
        }
        let cfg: Self = serde_json::from_value(Value::Object(full))
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Every key, in declaration order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.threads == 0 {
            return bad("threads must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.rehash_period == 0 || self.rebuild_every == 0 {
            return bad("rehash_period and rebuild_every must be >= 1");
        }
        if self.hidden == 0 && self.hidden_layers > 0 {
            return bad("hidden must be positive");
        }
        if self.use_lsh && self.min_active == 0 {
            return bad("min_active must be >= 1 with use_lsh");
        }
        if self.hidden_lsh && self.hidden_order == Order::Col {
            return bad("hidden_lsh needs hidden_order = row");
        }
        self.lanes()?;
        Ok(())
    }

    pub fn lanes(&self) -> Result<LaneConfig, ConfigError> {
        LaneConfig::new(self.lane_width, self.lane_enabled)
            .map_err(|e: KernelError| ConfigError::Invalid(format!("lane_width: {e}")))
    }

    fn hash(&self, input_dim: usize, layer: usize) -> HashFamilyParams {
        let seed = slide_core::rng::derive_seed(self.seed, &[0x4A54, layer as u64]);
        let mut p = match self.hash_family {
            HashKind::Dwta => HashFamilyParams::dwta(self.k, self.l, input_dim, seed),
            HashKind::Simhash => HashFamilyParams::simhash(self.k, self.l, input_dim, seed),
        };
        p.bin_size = self.bin_size;
        p.densify_cap = self.densify_cap;
        p
    }

    /// Layer stack for the given data dimensions.
    pub fn network_spec(&self, input_dim: usize, label_dim: usize) -> Result<NetworkSpec, ConfigError> {
        let mut layers = Vec::new();
        let mut m = input_dim;
        let n = self.hidden;
        for l in 0..self.hidden_layers {
            // The first layer reads the sparse example; later ones read
            // dense activations.
            let order = if l == 0 { self.hidden_order.into() } else { StorageOrder::RowMajor };
            let lsh = (self.hidden_lsh && order == StorageOrder::RowMajor).then(|| {
                SparsityConfig {
                    hash: self.hash(m, l),
                    min_active: self.min_active.min(n),
                }
            });
            layers.push(LayerConfig { n, m, activation: Activation::Relu, order, lsh });
            m = n;
        }
        let out = self.hidden_layers;
        let lsh = self.use_lsh.then(|| SparsityConfig {
            hash: self.hash(m, out),
            min_active: self.min_active.min(label_dim),
        });
        let order = if out == 0 { StorageOrder::ColMajor } else { StorageOrder::RowMajor };
        if out == 0 && self.use_lsh {
            return Err(ConfigError::Invalid(
                "an LSH output layer needs at least one hidden layer".into(),
            ));
        }
        layers.push(LayerConfig {
            n: label_dim,
            m,
            activation: Activation::Softmax,
            order,
            lsh,
        });
        let spec = NetworkSpec {
            layers,
            hyper: AdamHyper {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
                bias_correction: self.bias_correction,
            },
            lanes: self.lanes()?,
            policy: apply_mode(self.bf16_mode, self.bf16_rounding.into()),
            seed: self.seed,
        };
        spec.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(spec)
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub no_lanes: bool,
    pub bf16: Option<QuantMode>,
    pub metrics: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut TrainConfig) -> Result<(), ConfigError> {
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.no_lanes {
            cfg.lane_enabled = false;
        }
        if let Some(m) = self.bf16 {
            cfg.bf16_mode = m;
        }
        if let Some(p) = &self.metrics {
            cfg.metrics_path = Some(p.clone());
        }
        cfg.validate()
    }
}
