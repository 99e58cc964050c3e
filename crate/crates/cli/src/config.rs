use std::path::{Path, PathBuf};
use std::str::FromStr;

use markermap_core::experiment::{Approach, NoiseProtocol, Protocol};
use markermap_core::model::{ClassLoss, Method, TrainConfig};
use markermap_core::SyntheticSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::Shared;
use crate::failure::Failure;

pub const DEFAULT_OUT: &str = "markermap-out";
pub const DEFAULT_SEED_COUNT: usize = 10;
pub const DEFAULT_BENCH_K: [usize; 3] = [3, 5, 10];
pub const DEFAULT_NOISE: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

/// Hidden-layer width per named dataset.
pub const PRESETS: [(&str, usize); 4] = [
    ("zeisel", 256),
    ("paul", 256),
    ("citeseq", 64),
    ("mouse-brain", 500),
];

/// `k = 5` and `k = [3, 5, 10]` are both accepted in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Everything a run can be configured with. Config files and flags both
/// produce one of these; flags win field by field.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    /// Informational in files; the subcommand decides.
    pub command: Option<String>,
    pub data: Option<PathBuf>,
    pub synthetic: Option<bool>,
    pub synth: Option<SyntheticSpec>,
    pub label_column: Option<String>,
    pub mode: Option<Approach>,
    pub methods: Option<Vec<Approach>>,
    pub k: Option<OneOrMany<usize>>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub n_seeds: Option<usize>,
    pub preset: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub tau_initial: Option<f64>,
    pub tau_final: Option<f64>,
    pub hidden: Option<usize>,
    pub latent: Option<usize>,
    pub batch_size: Option<usize>,
    pub min_epochs: Option<usize>,
    pub max_epochs: Option<usize>,
    pub anneal_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub learning_rate: Option<f64>,
    pub lr_grid_points: Option<usize>,
    pub kl_weight: Option<f64>,
    pub class_loss: Option<ClassLoss>,
    pub prior_markers: Option<Vec<String>>,
    pub neighbors: Option<usize>,
    pub log_transform: Option<bool>,
    pub stratified: Option<bool>,
    pub noise: Option<Vec<f64>>,
    pub protocol: Option<NoiseProtocol>,
    pub markers: Option<Vec<String>>,
    pub out: Option<PathBuf>,
}

fn parse_named<T: DeserializeOwned>(what: &str, s: &str) -> Result<T, Failure> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Failure::new("invalid_argument", format!("unknown {what} '{s}'")))
}

fn parse<T: FromStr<Err = markermap_core::Error>>(s: &str) -> Result<T, Failure> {
    Ok(s.parse()?)
}

/// Non-empty, trimmed lines of a list file.
pub fn read_list(path: &Path) -> Result<Vec<String>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

impl RunConfig {
    pub fn from_flags(f: &Shared) -> Result<Self, Failure> {
        let synth_flags = [
            f.cells.is_some(),
            f.genes.is_some(),
            f.classes.is_some(),
            f.planted.is_some(),
            f.separation.is_some(),
            f.noise_sd.is_some(),
            f.synth_seed.is_some(),
        ];
        let synth = synth_flags.iter().any(|&b| b).then(SyntheticSpec::default);
        Ok(Self {
            command: None,
            data: f.data.clone(),
            synthetic: f.synthetic.then_some(true),
            synth,
            label_column: f.label_column.clone(),
            mode: f.mode.as_deref().map(parse).transpose()?,
            methods: f
                .methods
                .as_ref()
                .map(|m| m.iter().map(|s| parse(s)).collect())
                .transpose()?,
            k: f.k.clone().map(OneOrMany::Many),
            seed: f.seed,
            seeds: f.seeds.clone(),
            n_seeds: f.n_seeds,
            preset: f.preset.clone(),
            alpha: f.alpha,
            beta: f.beta,
            tau_initial: f.tau_initial,
            tau_final: f.tau_final,
            hidden: f.hidden,
            latent: f.latent,
            batch_size: f.batch_size,
            min_epochs: f.min_epochs,
            max_epochs: f.max_epochs,
            anneal_epochs: f.anneal_epochs,
            patience: f.patience,
            learning_rate: f.learning_rate,
            lr_grid_points: f.lr_grid_points,
            kl_weight: f.kl_weight,
            class_loss: f
                .class_loss
                .as_deref()
                .map(|s| parse_named("class loss", s))
                .transpose()?,
            prior_markers: f.prior_markers.as_deref().map(read_list).transpose()?,
            neighbors: f.neighbors,
            log_transform: f.log_transform,
            stratified: f.stratified,
            noise: f.noise.clone(),
            protocol: f.protocol.as_deref().map(parse).transpose()?,
            markers: f.markers.as_deref().map(read_list).transpose()?,
            out: f.out.clone(),
        })
    }

    /// TOML by default; a `.json` file may be either a bare config or a
    /// report whose `config` object is reused.
    pub fn from_file(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        let bad = |e: String| Failure::new("config", format!("{}: {e}", path.display()));
        if path.extension().is_some_and(|e| e == "json") {
            let mut value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            if let Some(inner) = value.get_mut("config") {
                value = inner.take();
            }
            serde_json::from_value(value).map_err(|e| bad(e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| bad(e.message().to_string()))
        }
    }

    /// Field-wise `self` over `base`. Synthetic specs merge per field when
    /// flags only set some of them.
    pub fn over(self, base: RunConfig) -> RunConfig {
        RunConfig {
            command: self.command.or(base.command),
            data: self.data.or(base.data),
            synthetic: self.synthetic.or(base.synthetic),
            synth: match (self.synth, base.synth) {
                (Some(_), b) => b.or(Some(SyntheticSpec::default())),
                (None, b) => b,
            },
            label_column: self.label_column.or(base.label_column),
            mode: self.mode.or(base.mode),
            methods: self.methods.or(base.methods),
            k: self.k.or(base.k),
            seed: self.seed.or(base.seed),
            seeds: self.seeds.or(base.seeds),
            n_seeds: self.n_seeds.or(base.n_seeds),
            preset: self.preset.or(base.preset),
            alpha: self.alpha.or(base.alpha),
            beta: self.beta.or(base.beta),
            tau_initial: self.tau_initial.or(base.tau_initial),
            tau_final: self.tau_final.or(base.tau_final),
            hidden: self.hidden.or(base.hidden),
            latent: self.latent.or(base.latent),
            batch_size: self.batch_size.or(base.batch_size),
            min_epochs: self.min_epochs.or(base.min_epochs),
            max_epochs: self.max_epochs.or(base.max_epochs),
            anneal_epochs: self.anneal_epochs.or(base.anneal_epochs),
            patience: self.patience.or(base.patience),
            learning_rate: self.learning_rate.or(base.learning_rate),
            lr_grid_points: self.lr_grid_points.or(base.lr_grid_points),
            kl_weight: self.kl_weight.or(base.kl_weight),
            class_loss: self.class_loss.or(base.class_loss),
            prior_markers: self.prior_markers.or(base.prior_markers),
            neighbors: self.neighbors.or(base.neighbors),
            log_transform: self.log_transform.or(base.log_transform),
            stratified: self.stratified.or(base.stratified),
            noise: self.noise.or(base.noise),
            protocol: self.protocol.or(base.protocol),
            markers: self.markers.or(base.markers),
            out: self.out.or(base.out),
        }
    }
}

/// Apply individual synthetic-spec flags on top of a spec.
pub fn apply_synth_flags(spec: &mut SyntheticSpec, f: &Shared) {
    if let Some(v) = f.cells {
        spec.n = v;
    }
    if let Some(v) = f.genes {
        spec.d = v;
    }
    if let Some(v) = f.classes {
        spec.classes = v;
    }
    if let Some(v) = f.planted {
        spec.markers = v;
    }
    if let Some(v) = f.separation {
        spec.separation = v;
    }
    if let Some(v) = f.noise_sd {
        spec.noise = v;
    }
    if let Some(v) = f.synth_seed {
        spec.seed = v;
    }
}

/// A fully defaulted run. Serialized as the report's config echo, using
/// the same keys as [`RunConfig`] so the echo can be fed back in.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Resolved {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub synthetic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SyntheticSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_column: Option<String>,
    pub mode: Approach,
    pub methods: Vec<Approach>,
    pub k: Vec<usize>,
    pub seed: u64,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub tau_initial: f64,
    pub tau_final: f64,
    pub hidden: usize,
    pub latent: usize,
    pub batch_size: usize,
    pub min_epochs: usize,
    pub max_epochs: usize,
    pub anneal_epochs: usize,
    pub patience: usize,
    pub learning_rate: Option<f64>,
    pub lr_grid_points: usize,
    pub kl_weight: f64,
    pub class_loss: ClassLoss,
    pub prior_markers: Vec<String>,
    pub neighbors: usize,
    pub log_transform: bool,
    pub stratified: bool,
    pub noise: Vec<f64>,
    pub protocol: NoiseProtocol,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub markers: Option<Vec<String>>,
    pub out: PathBuf,
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure::new("invalid_argument", message)
}

impl Resolved {
    pub fn new(command: &str, c: RunConfig) -> Result<Self, Failure> {
        let defaults = TrainConfig::default();
        let synthetic = command == "synth" || c.synthetic.unwrap_or(false);
        if synthetic && c.data.is_some() && command != "synth" {
            return Err(invalid("--data and --synthetic are mutually exclusive"));
        }
        if !synthetic && c.data.is_none() {
            return Err(invalid("no data source: pass --data <CSV> or --synthetic"));
        }
        let hidden = match (c.hidden, &c.preset) {
            (Some(h), _) => h,
            (None, Some(p)) => PRESETS
                .iter()
                .find(|(name, _)| name == p)
                .map(|&(_, h)| h)
                .ok_or_else(|| invalid(format!("unknown preset '{p}'")))?,
            (None, None) => defaults.hidden,
        };
        let seed = c.seed.unwrap_or(defaults.seed);
        let seeds = match (c.seeds, c.n_seeds) {
            (Some(s), _) => s,
            (None, n) => (0..n.unwrap_or(DEFAULT_SEED_COUNT) as u64)
                .map(|i| seed + i)
                .collect(),
        };
        let default_mode = if command == "reconstruct" {
            Method::Unsupervised
        } else {
            Method::Supervised
        };
        let k = match c.k {
            Some(k) => k.into_vec(),
            None if command == "benchmark" => DEFAULT_BENCH_K.to_vec(),
            None => vec![defaults.k],
        };
        if k.is_empty() || seeds.is_empty() {
            return Err(invalid("K and seed lists must be non-empty"));
        }
        if command != "benchmark" && k.len() != 1 {
            return Err(invalid(format!("{command} takes a single --k")));
        }
        let noise = c.noise.unwrap_or_else(|| DEFAULT_NOISE.to_vec());
        if let Some(p) = noise.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(invalid(format!("noise fraction {p} outside [0, 1]")));
        }
        Ok(Self {
            command: command.to_string(),
            data: if synthetic { None } else { c.data },
            synthetic,
            synth: synthetic.then(|| c.synth.unwrap_or_default()),
            label_column: c.label_column,
            mode: c.mode.unwrap_or(Approach::Model(default_mode)),
            methods: c
                .methods
                .unwrap_or_else(|| vec![Approach::Model(Method::Supervised), Approach::Random]),
            k,
            seed,
            seeds,
            preset: c.preset,
            alpha: c.alpha,
            beta: c.beta.unwrap_or(defaults.beta),
            tau_initial: c.tau_initial.unwrap_or(defaults.tau_initial),
            tau_final: c.tau_final.unwrap_or(defaults.tau_final),
            hidden,
            latent: c.latent.unwrap_or(defaults.latent),
            batch_size: c.batch_size.unwrap_or(defaults.batch_size),
            min_epochs: c.min_epochs.unwrap_or(defaults.min_epochs),
            max_epochs: c.max_epochs.unwrap_or(defaults.max_epochs),
            anneal_epochs: c.anneal_epochs.unwrap_or(defaults.anneal_epochs),
            patience: c.patience.unwrap_or(defaults.patience),
            learning_rate: c.learning_rate,
            lr_grid_points: c.lr_grid_points.unwrap_or(defaults.lr_grid_points),
            kl_weight: c.kl_weight.unwrap_or(defaults.kl_weight),
            class_loss: c.class_loss.unwrap_or(defaults.class_loss),
            prior_markers: c.prior_markers.unwrap_or_default(),
            neighbors: c.neighbors.unwrap_or(Protocol::default().knn_neighbors),
            log_transform: c.log_transform.unwrap_or(!synthetic),
            stratified: c.stratified.unwrap_or(true),
            noise,
            protocol: c.protocol.unwrap_or(NoiseProtocol::Both),
            markers: c.markers,
            out: c.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        })
    }

    pub fn single_k(&self) -> usize {
        self.k[0]
    }

    pub fn protocol_settings(&self) -> Protocol {
        Protocol {
            log_transform: self.log_transform,
            stratified: self.stratified,
            knn_neighbors: self.neighbors,
        }
    }

    pub fn train_config(&self, k: usize, seed: u64, prior_markers: Vec<usize>) -> TrainConfig {
        TrainConfig {
            k,
            hidden: self.hidden,
            latent: self.latent,
            batch_size: self.batch_size,
            min_epochs: self.min_epochs,
            max_epochs: self.max_epochs,
            anneal_epochs: self.anneal_epochs,
            patience: self.patience,
            seed,
            alpha: self.alpha,
            beta: self.beta,
            tau_initial: self.tau_initial,
            tau_final: self.tau_final,
            kl_weight: self.kl_weight,
            class_loss: self.class_loss,
            learning_rate: self.learning_rate,
            lr_grid_points: self.lr_grid_points,
            prior_markers,
        }
    }
}
