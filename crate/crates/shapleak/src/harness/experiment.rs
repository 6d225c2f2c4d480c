//! Experiment orchestration: prepare a target (data + model), serve its
//! explanations, run the selected attacks and baselines against held-out
//! samples, and collect averaged metrics per (setting, model, seed) row.

use crate::attack1::{build_pairs, reconstruct, train_inverse, InverseHyper, PairSet};
use crate::attack2::{
    gen_random_queries, run_attack2, shap_range, success_rate, Attack2Config, Reconstruction, Xi,
};
use crate::data::{gen_synthetic, load_csv, macc, normalize_minmax, split, Dataset, DataError,
    Split, SynthConfig};
use crate::defense::DefenseConfig;
use crate::explain::{permutations_needed, ReferenceSample};
use crate::harness::baselines::{rg_e, rg_n, rg_u};
use crate::harness::metrics::{l1_loss, per_feature_l1, MetricError};
use crate::models::{
    train_gbdt, train_ksvm, train_mlp, train_rf, GbdtHyper, KsvmHyper, MlpArch, MlpHyper, Model,
    Predictor, RfHyper, TrainError,
};
use crate::service::{
    serve, EngineError, ExplainClient, ExplainEngine, ExplainOracle, InProcessOracle, MethodSpec,
    ServiceError, TargetClassPolicy,
};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("attack1: {0}")]
    Attack1(#[from] crate::attack1::AttackError),
    #[error("attack2: {0}")]
    Attack2(#[from] crate::attack2::Attack2Error),
    #[error("explain: {0}")]
    Explain(#[from] crate::explain::ExplainError),
    #[error("query failed: {0}")]
    Query(String),
    #[error("bad experiment config: {0}")]
    BadConfig(String),
    #[error("io: {0}")]
    Io(String),
}

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    Synthetic {
        #[serde(flatten)]
        config: SynthConfig,
    },
    Csv {
        path: String,
        label_column: String,
    },
}

/// Which model family to attack, with its hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Mlp {
        #[serde(default = "d_mlp_epochs")]
        epochs: u32,
        #[serde(default = "d_mlp_lr")]
        learning_rate: f64,
        #[serde(default = "d_mlp_batch")]
        batch_size: usize,
        #[serde(default)]
        dropout: f64,
    },
    RandomForest {
        #[serde(default = "d_rf_trees")]
        n_trees: usize,
        #[serde(default = "d_rf_depth")]
        max_depth: usize,
    },
    Gbdt {
        #[serde(default = "d_rf_trees")]
        n_trees: usize,
        #[serde(default = "d_gbdt_depth")]
        max_depth: usize,
        #[serde(default = "d_gbdt_shrinkage")]
        shrinkage: f64,
    },
    Ksvm {
        #[serde(default = "d_ksvm_gamma")]
        gamma: f64,
        #[serde(default = "d_ksvm_reg")]
        regularization: f64,
    },
}

fn d_mlp_epochs() -> u32 {
    200
}
fn d_mlp_lr() -> f64 {
    0.05
}
fn d_mlp_batch() -> usize {
    64
}
fn d_rf_trees() -> usize {
    100
}
fn d_rf_depth() -> usize {
    5
}
fn d_gbdt_depth() -> usize {
    3
}
fn d_gbdt_shrinkage() -> f64 {
    0.1
}
fn d_ksvm_gamma() -> f64 {
    1.0
}
fn d_ksvm_reg() -> f64 {
    1e-3
}

impl ModelSpec {
    pub fn label(&self) -> &'static str {
        match self {
            ModelSpec::Mlp { .. } => "mlp",
            ModelSpec::RandomForest { .. } => "random-forest",
            ModelSpec::Gbdt { .. } => "gbdt",
            ModelSpec::Ksvm { .. } => "ksvm",
        }
    }

    pub fn with_dropout(self, rate: f64) -> Self {
        match self {
            ModelSpec::Mlp {
                epochs,
                learning_rate,
                batch_size,
                ..
            } => ModelSpec::Mlp {
                epochs,
                learning_rate,
                batch_size,
                dropout: rate,
            },
            other => other,
        }
    }
}

/// How the served explanation is computed; the per-run seed is derived by
/// the harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExplainSpec {
    Exact,
    Sampled {
        #[serde(default = "d_nu")]
        nu: u32,
    },
}

fn d_nu() -> u32 {
    50
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attack1Spec {
    /// Auxiliary rows queried to build the training pairs.
    #[serde(default = "d_aux_queries")]
    pub aux_queries: usize,
    #[serde(default)]
    pub hyper: InverseHyperConfig,
    /// Train and evaluate on released features only (for the top-k
    /// defense experiment) instead of zero-filling withheld entries.
    #[serde(default)]
    pub released_only: bool,
}

fn d_aux_queries() -> usize {
    800
}

impl Default for Attack1Spec {
    fn default() -> Self {
        Self {
            aux_queries: d_aux_queries(),
            hyper: InverseHyperConfig::default(),
            released_only: false,
        }
    }
}

/// Serializable mirror of [`InverseHyper`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseHyperConfig {
    #[serde(default = "d_a1_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_a1_epochs")]
    pub epochs: u32,
    #[serde(default = "d_a1_batch")]
    pub batch_size: usize,
    #[serde(default = "d_a1_wd")]
    pub weight_decay: f64,
}

fn d_a1_lr() -> f64 {
    0.05
}
fn d_a1_epochs() -> u32 {
    1000
}
fn d_a1_batch() -> usize {
    32
}
fn d_a1_wd() -> f64 {
    1e-4
}

impl Default for InverseHyperConfig {
    fn default() -> Self {
        Self {
            learning_rate: d_a1_lr(),
            epochs: d_a1_epochs(),
            batch_size: d_a1_batch(),
            weight_decay: d_a1_wd(),
        }
    }
}

impl From<InverseHyperConfig> for InverseHyper {
    fn from(c: InverseHyperConfig) -> Self {
        InverseHyper {
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            batch_size: c.batch_size,
            weight_decay: c.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attack2Spec {
    #[serde(default = "d_rand_queries")]
    pub rand_queries: usize,
    #[serde(default = "d_min_candidates")]
    pub min_candidates: usize,
    #[serde(default = "d_tau")]
    pub tau: f64,
    /// Use per-feature Shapley ranges for xi instead of the global range.
    #[serde(default)]
    pub per_feature_xi: bool,
}

fn d_rand_queries() -> usize {
    100
}
fn d_min_candidates() -> usize {
    30
}
fn d_tau() -> f64 {
    0.4
}

impl Default for Attack2Spec {
    fn default() -> Self {
        Self {
            rand_queries: d_rand_queries(),
            min_candidates: d_min_candidates(),
            tau: d_tau(),
            per_feature_xi: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    /// Held-out rows each attack is evaluated on.
    #[serde(default = "d_val_rows")]
    pub val_rows: usize,
    /// Independent reference samples averaged per row.
    #[serde(default = "d_reference_count")]
    pub reference_count: usize,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    /// Route queries through a real TCP loopback service instead of the
    /// in-process engine (same answers, slower).
    #[serde(default)]
    pub use_tcp: bool,
}

fn d_val_rows() -> usize {
    200
}
fn d_reference_count() -> usize {
    10
}
fn d_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            val_rows: d_val_rows(),
            reference_count: d_reference_count(),
            seeds: d_seeds(),
            use_tcp: false,
        }
    }
}

/// One experiment axis swept over settings; each setting produces one row
/// per (model, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Sweep {
    None,
    /// Vary the attacker's query budget (aux and random query counts).
    Queries { counts: Vec<usize> },
    /// Vary the sampling error: epsilon = fraction * r_m; 0 means exact.
    SamplingError { fractions: Vec<f64> },
    QuantizeLevels { levels: Vec<u32> },
    DropoutRates { rates: Vec<f64> },
    /// Top-k release with k = ceil(fraction * n).
    TopkFractions { fractions: Vec<f64> },
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub models: Vec<ModelSpec>,
    #[serde(default = "d_explain")]
    pub explain: ExplainSpec,
    #[serde(default)]
    pub defense: DefenseConfig,
    #[serde(default)]
    pub attack1: Option<Attack1Spec>,
    #[serde(default)]
    pub attack2: Option<Attack2Spec>,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub eval: EvalSpec,
}

fn d_explain() -> ExplainSpec {
    ExplainSpec::Sampled { nu: 50 }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| HarnessError::Io(format!("cannot read config: {e}")))?;
        toml::from_str(&text).map_err(|e| HarnessError::BadConfig(e.to_string()))
    }
}

/// One (setting, model, seed) run, averaged over its reference samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub setting: String,
    /// Numeric value of the swept knob, for plotting.
    pub setting_value: f64,
    pub model: String,
    pub seed: u64,
    pub attack1_l1: Option<f64>,
    pub attack2_sr: Option<f64>,
    pub attack2_l1_recovered: Option<f64>,
    pub rge_l1: f64,
    pub rgu_l1: f64,
    pub rgn_l1: f64,
    /// Attack-1 per-feature mean absolute error (empty when disabled).
    pub per_feature_l1: Vec<f64>,
    /// Per-feature MACC of the evaluated rows against model outputs.
    pub per_feature_macc: Vec<f64>,
    pub wall_time_s: f64,
    /// Populated when this row failed; other rows still run.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub explain: ExplainSpec,
    pub defense: DefenseConfig,
    pub attack1: Option<Attack1Spec>,
    pub attack2: Option<Attack2Spec>,
    pub val_rows: usize,
    pub reference_count: usize,
    pub use_tcp: bool,
}

/// Metrics from one run, averaged over the reference samples.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub attack1_l1: Option<f64>,
    pub attack1_per_feature: Vec<f64>,
    pub attack2_sr: Option<f64>,
    pub attack2_recovered_l1: Option<f64>,
    pub rge_l1: f64,
    pub rgu_l1: f64,
    pub rgn_l1: f64,
    pub macc: Vec<f64>,
}

/// Train the configured model on the train split.
pub fn train_target(spec: &ModelSpec, train: &Dataset, seed: u64) -> Result<Model, TrainError> {
    Ok(match *spec {
        ModelSpec::Mlp {
            epochs,
            learning_rate,
            batch_size,
            dropout,
        } => Model::Mlp(train_mlp(
            train,
            &MlpArch::standard(train.n_features()).with_dropout(dropout),
            &MlpHyper {
                epochs,
                learning_rate,
                batch_size,
            },
            seed,
        )?),
        ModelSpec::RandomForest { n_trees, max_depth } => Model::RandomForest(train_rf(
            train,
            &RfHyper { n_trees, max_depth },
            seed,
        )?),
        ModelSpec::Gbdt {
            n_trees,
            max_depth,
            shrinkage,
        } => Model::Gbdt(train_gbdt(
            train,
            &GbdtHyper {
                n_trees,
                max_depth,
                shrinkage,
            },
            seed,
        )?),
        ModelSpec::Ksvm {
            gamma,
            regularization,
        } => Model::Ksvm(train_ksvm(
            train,
            &KsvmHyper {
                gamma,
                regularization,
                ..KsvmHyper::default()
            },
            seed,
        )?),
    })
}

/// Load or generate the dataset and split it. CSV data is normalized;
/// synthetic data is already in the unit cube.
pub fn prepare_data(spec: &DatasetSpec, seed: u64) -> Result<Split, HarnessError> {
    let dataset = match spec {
        DatasetSpec::Synthetic { config } => gen_synthetic(&SynthConfig {
            seed: crate::rng::substream_seed(seed, 0),
            ..*config
        })?,
        DatasetSpec::Csv { path, label_column } => {
            let raw = load_csv(path, label_column)?;
            normalize_minmax(&raw).0
        }
    };
    Ok(split(&dataset, crate::rng::substream_seed(seed, 1))?)
}

fn drive_oracle(
    oracle: &mut dyn ExplainOracle,
    rows: &[Vec<f64>],
) -> Result<Vec<crate::service::ServedExplanation>, HarnessError> {
    oracle
        .explain_batch(rows)
        .map_err(|e| HarnessError::Query(e.to_string()))
}

struct Session {
    engine: Arc<ExplainEngine>,
    // Held for its Drop: shuts the listener down with the session.
    _server: Option<crate::service::ServerHandle>,
    client_addr: Option<String>,
    use_tcp: bool,
}

impl Session {
    fn start(
        model: Arc<Model>,
        method: MethodSpec,
        reference: ReferenceSample,
        defense: &DefenseConfig,
        calibration_seed: u64,
        use_tcp: bool,
        budget: u64,
    ) -> Result<Self, HarnessError> {
        let engine = Arc::new(ExplainEngine::new(
            Arc::clone(&model) as Arc<dyn Predictor + Send + Sync>,
            method,
            reference.clone(),
            TargetClassPolicy::TopPredicted,
            defense,
            calibration_seed,
        )?);
        if use_tcp {
            // A second engine instance backs the TCP server; both are
            // deterministic, so answers agree bit for bit.
            let server = serve(
                ExplainEngine::new(
                    model as Arc<dyn Predictor + Send + Sync>,
                    method,
                    reference,
                    TargetClassPolicy::TopPredicted,
                    defense,
                    calibration_seed,
                )?,
                HashMap::from([
                    ("attacker".to_owned(), budget),
                    ("victim".to_owned(), u64::MAX / 2),
                ]),
                "127.0.0.1:0",
            )?;
            let addr = server.addr().to_string();
            Ok(Self {
                engine,
                _server: Some(server),
                client_addr: Some(addr),
                use_tcp,
            })
        } else {
            Ok(Self {
                engine,
                _server: None,
                client_addr: None,
                use_tcp,
            })
        }
    }

    fn attacker_oracle(&self, budget: u64, prefix: &str) -> Box<dyn ExplainOracle> {
        if self.use_tcp {
            Box::new(ExplainClient::new(
                self.client_addr.clone().expect("server running"),
                "attacker",
                prefix,
            ))
        } else {
            Box::new(InProcessOracle::new(
                Arc::clone(&self.engine),
                prefix,
                budget,
            ))
        }
    }

    /// Victim-side explanations of the evaluated rows (the explanation
    /// reports the adversary later observes).
    fn victim_explanations(
        &self,
        rows: &[Vec<f64>],
    ) -> Result<Vec<crate::service::ServedExplanation>, HarnessError> {
        let mut oracle: Box<dyn ExplainOracle> = if self.use_tcp {
            Box::new(ExplainClient::new(
                self.client_addr.clone().expect("server running"),
                "victim",
                "victim",
            ))
        } else {
            Box::new(InProcessOracle::new(
                Arc::clone(&self.engine),
                "victim",
                u64::MAX / 2,
            ))
        };
        drive_oracle(oracle.as_mut(), rows)
    }
}

/// Run one fully-resolved configuration under one seed. Deterministic.
pub fn run_single(cfg: &RunConfig, seed: u64) -> Result<RunOutcome, HarnessError> {
    let split = prepare_data(&cfg.dataset, seed)?;
    let model = Arc::new(train_target(
        &cfg.model,
        &split.train,
        crate::rng::substream_seed(seed, 2),
    )?);
    let n = split.train.n_features();

    // Evaluation targets: a seeded subsample of the validation split.
    let mut eval_rng = crate::rng::stream(seed, 3);
    let mut val_idx: Vec<usize> = (0..split.val.n_rows()).collect();
    val_idx.shuffle(&mut eval_rng);
    val_idx.truncate(cfg.val_rows.min(split.val.n_rows()));
    let val_x: Vec<Vec<f64>> = val_idx
        .iter()
        .map(|&i| split.val.features[i].clone())
        .collect();

    // Feature importance of the evaluated rows under this model.
    let predictions: Vec<Vec<f64>> = val_x.iter().map(|x| model.predict(x)).collect();
    let macc_per_feature: Vec<f64> = (0..n)
        .map(|j| {
            let column: Vec<f64> = val_x.iter().map(|r| r[j]).collect();
            macc(&column, &predictions).unwrap_or(0.0)
        })
        .collect();

    // Baselines share the evaluation targets.
    let rge = rg_e(&split.aux, val_x.len(), crate::rng::substream_seed(seed, 40));
    let rgu = rg_u(n, val_x.len(), crate::rng::substream_seed(seed, 41));
    let rgn = rg_n(n, val_x.len(), crate::rng::substream_seed(seed, 42));
    let rge_l1 = l1_loss(&rge, &val_x, None)?;
    let rgu_l1 = l1_loss(&rgu, &val_x, None)?;
    let rgn_l1 = l1_loss(&rgn, &val_x, None)?;

    let mut ref_rng = crate::rng::stream(seed, 4);
    let mut attack1_l1_sum = 0.0;
    let mut attack1_pf_sum = vec![0.0f64; n];
    let mut attack2_sr_sum = 0.0;
    let mut attack2_l1_sum = 0.0;
    let mut attack2_l1_refs = 0usize;

    for ref_idx in 0..cfg.reference_count {
        let ref_row = (0..split.train.n_rows())
            .collect::<Vec<_>>()
            .choose(&mut ref_rng)
            .copied()
            .expect("train split is nonempty");
        let reference = ReferenceSample::from_train_row(&split.train, ref_row);
        let method = match cfg.explain {
            ExplainSpec::Exact => MethodSpec::Exact,
            ExplainSpec::Sampled { nu } => MethodSpec::Sampled {
                nu,
                seed: crate::rng::substream_seed(seed, 100 + ref_idx as u64),
            },
        };
        let budget = cfg
            .attack1
            .map(|a| a.aux_queries as u64)
            .unwrap_or(0)
            + cfg.attack2.map(|a| a.rand_queries as u64).unwrap_or(0);
        let session = Session::start(
            Arc::clone(&model),
            method,
            reference,
            &cfg.defense,
            crate::rng::substream_seed(seed, 200 + ref_idx as u64),
            cfg.use_tcp,
            budget,
        )?;

        let victim = session.victim_explanations(&val_x)?;

        if let Some(spec) = &cfg.attack1 {
            let aux_rows = spec.aux_queries.min(split.aux.n_rows());
            let aux = Dataset {
                features: split.aux.features[..aux_rows].to_vec(),
                labels: split.aux.labels[..aux_rows].to_vec(),
                feature_names: split.aux.feature_names.clone(),
                n_classes: split.aux.n_classes,
            };
            let mut oracle = session.attacker_oracle(spec.aux_queries as u64, "aux");
            let harvest = build_pairs(&aux, oracle.as_mut())?;
            let released_indices: Option<Vec<usize>> = if spec.released_only {
                session.engine.resolved_defense().topk.clone()
            } else {
                None
            };
            let pairs = match &released_indices {
                Some(idx) => project_pairs(&harvest.pairs, idx),
                None => harvest.pairs,
            };
            let psi = train_inverse(
                &pairs,
                &spec.hyper.into(),
                crate::rng::substream_seed(seed, 300 + ref_idx as u64),
            )?;
            let mut reconstructions = Vec::with_capacity(victim.len());
            let mut truth = Vec::with_capacity(victim.len());
            for (served, x) in victim.iter().zip(&val_x) {
                let s = match &released_indices {
                    Some(idx) => idx
                        .iter()
                        .map(|&i| {
                            served
                                .released
                                .to_options()
                                .get(i)
                                .copied()
                                .flatten()
                                .unwrap_or(0.0)
                        })
                        .collect(),
                    None => served.released.densify(0.0),
                };
                reconstructions.push(reconstruct(&psi, &s)?);
                truth.push(match &released_indices {
                    Some(idx) => idx.iter().map(|&i| x[i]).collect(),
                    None => x.clone(),
                });
            }
            attack1_l1_sum += l1_loss(&reconstructions, &truth, None)?;
            let pf = per_feature_l1(&reconstructions, &truth, None)?;
            match &released_indices {
                Some(idx) => {
                    for (slot, &i) in idx.iter().enumerate() {
                        attack1_pf_sum[i] += pf[slot];
                    }
                }
                None => {
                    for (sum, v) in attack1_pf_sum.iter_mut().zip(&pf) {
                        *sum += v;
                    }
                }
            }
        }

        if let Some(spec) = &cfg.attack2 {
            let x_rand = gen_random_queries(
                n,
                spec.rand_queries,
                crate::rng::substream_seed(seed, 400 + ref_idx as u64),
            );
            let mut oracle = session.attacker_oracle(spec.rand_queries as u64, "rand");
            let served_rand = drive_oracle(oracle.as_mut(), &x_rand)?;
            let s_rand_options: Vec<Vec<Option<f64>>> = served_rand
                .iter()
                .map(|s| s.released.to_options())
                .collect();
            let present: Vec<f64> = s_rand_options
                .iter()
                .flatten()
                .flatten()
                .copied()
                .collect();
            let r = shap_range(&[present])?;
            let a2cfg = Attack2Config {
                min_candidates: spec.min_candidates,
                tau: spec.tau,
                xi: if spec.per_feature_xi {
                    let dense: Vec<Vec<f64>> = served_rand
                        .iter()
                        .map(|s| s.released.densify(0.0))
                        .collect();
                    Xi::PerFeature(
                        crate::attack2::shap_range_per_feature(&dense)?
                            .into_iter()
                            .map(crate::attack2::xi_from_range)
                            .collect(),
                    )
                } else {
                    Xi::Global(crate::attack2::xi_from_range(r))
                },
            };
            let mut recs = Vec::with_capacity(victim.len());
            for served in &victim {
                recs.push(attack2_on_released(
                    &served.released.to_options(),
                    &x_rand,
                    &s_rand_options,
                    &a2cfg,
                )?);
            }
            attack2_sr_sum += success_rate(&recs)?;
            let mask: Vec<Vec<bool>> = recs
                .iter()
                .map(|r| r.values.iter().map(Option::is_some).collect())
                .collect();
            let xhat: Vec<Vec<f64>> = recs
                .iter()
                .map(|r| r.values.iter().map(|v| v.unwrap_or(0.0)).collect())
                .collect();
            match l1_loss(&xhat, &val_x, Some(&mask)) {
                Ok(v) => {
                    attack2_l1_sum += v;
                    attack2_l1_refs += 1;
                }
                Err(MetricError::EmptyMask) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    let refs = cfg.reference_count as f64;
    Ok(RunOutcome {
        attack1_l1: cfg.attack1.as_ref().map(|_| attack1_l1_sum / refs),
        attack1_per_feature: if cfg.attack1.is_some() {
            attack1_pf_sum.iter().map(|v| v / refs).collect()
        } else {
            Vec::new()
        },
        attack2_sr: cfg.attack2.as_ref().map(|_| attack2_sr_sum / refs),
        attack2_recovered_l1: if attack2_l1_refs > 0 {
            Some(attack2_l1_sum / attack2_l1_refs as f64)
        } else {
            None
        },
        rge_l1,
        rgu_l1,
        rgn_l1,
        macc: macc_per_feature,
    })
}

/// Restrict a pair set to the released feature columns (both the Shapley
/// inputs and the reconstruction targets).
fn project_pairs(pairs: &PairSet, indices: &[usize]) -> PairSet {
    let shapley = pairs
        .shapley
        .iter()
        .map(|s| indices.iter().map(|&i| s[i]).collect())
        .collect();
    let inputs = pairs
        .inputs
        .iter()
        .map(|x| indices.iter().map(|&i| x[i]).collect())
        .collect();
    PairSet::new(shapley, inputs)
}

/// Attack 2 over possibly partial explanations: features withheld on
/// either side abstain outright; the rest run the dense attack.
pub fn attack2_on_released(
    target: &[Option<f64>],
    x_rand: &[Vec<f64>],
    s_rand: &[Vec<Option<f64>>],
    cfg: &Attack2Config,
) -> Result<Reconstruction, HarnessError> {
    let n = target.len();
    // Features usable on both the target and every random explanation
    // (the released set is fixed per service, so this is just the
    // intersection).
    let usable: Vec<usize> = (0..n)
        .filter(|&i| target[i].is_some() && s_rand.iter().all(|s| s[i].is_some()))
        .collect();
    if usable.len() == n {
        let dense_target: Vec<f64> = target.iter().map(|v| v.expect("checked")).collect();
        let dense_rand: Vec<Vec<f64>> = s_rand
            .iter()
            .map(|s| s.iter().map(|v| v.expect("checked")).collect())
            .collect();
        return Ok(run_attack2(&dense_target, x_rand, &dense_rand, cfg)?);
    }
    let sub_target: Vec<f64> = usable.iter().map(|&i| target[i].expect("usable")).collect();
    let sub_x: Vec<Vec<f64>> = x_rand
        .iter()
        .map(|r| usable.iter().map(|&i| r[i]).collect())
        .collect();
    let sub_s: Vec<Vec<f64>> = s_rand
        .iter()
        .map(|s| usable.iter().map(|&i| s[i].expect("usable")).collect())
        .collect();
    let sub_cfg = Attack2Config {
        min_candidates: cfg.min_candidates,
        tau: cfg.tau,
        xi: match &cfg.xi {
            Xi::Global(v) => Xi::Global(*v),
            Xi::PerFeature(v) => Xi::PerFeature(usable.iter().map(|&i| v[i]).collect()),
        },
    };
    let sub = run_attack2(&sub_target, &sub_x, &sub_s, &sub_cfg)?;
    let mut values = vec![None; n];
    let mut ranges = vec![(f64::NAN, f64::NAN); n];
    let mut counts = vec![0usize; n];
    for (slot, &i) in usable.iter().enumerate() {
        values[i] = sub.values[slot];
        ranges[i] = sub.ranges[slot];
        counts[i] = sub.counts[slot];
    }
    Ok(Reconstruction {
        values,
        ranges,
        counts,
    })
}

impl Sweep {
    /// `(label, numeric value, patch)` per setting.
    fn settings(&self) -> Vec<(String, f64)> {
        match self {
            Sweep::None => vec![("baseline".to_owned(), 0.0)],
            Sweep::Queries { counts } => counts
                .iter()
                .map(|&c| (format!("queries={c}"), c as f64))
                .collect(),
            Sweep::SamplingError { fractions } => fractions
                .iter()
                .map(|&f| (format!("eps_fraction={f}"), f))
                .collect(),
            Sweep::QuantizeLevels { levels } => levels
                .iter()
                .map(|&l| (format!("quantize={l}"), f64::from(l)))
                .collect(),
            Sweep::DropoutRates { rates } => rates
                .iter()
                .map(|&r| (format!("dropout={r}"), r))
                .collect(),
            Sweep::TopkFractions { fractions } => fractions
                .iter()
                .map(|&f| (format!("topk_fraction={f}"), f))
                .collect(),
        }
    }

    fn apply(&self, base: &RunConfig, value: f64) -> Result<RunConfig, HarnessError> {
        let mut cfg = base.clone();
        match self {
            Sweep::None => {}
            Sweep::Queries { .. } => {
                let count = value as usize;
                if let Some(a1) = &mut cfg.attack1 {
                    a1.aux_queries = count;
                }
                if let Some(a2) = &mut cfg.attack2 {
                    a2.rand_queries = count;
                }
            }
            Sweep::SamplingError { .. } => {
                cfg.explain = if value == 0.0 {
                    ExplainSpec::Exact
                } else {
                    // epsilon = fraction * r_m makes nu independent of the
                    // actual range.
                    ExplainSpec::Sampled {
                        nu: permutations_needed(0.1, value, 1.0)?,
                    }
                };
            }
            Sweep::QuantizeLevels { .. } => {
                cfg.defense.quantize_levels = Some(value as u32);
            }
            Sweep::DropoutRates { .. } => {
                cfg.model = cfg.model.with_dropout(value);
            }
            Sweep::TopkFractions { .. } => {
                let n = match &cfg.dataset {
                    DatasetSpec::Synthetic { config } => config.n_features,
                    DatasetSpec::Csv { .. } => {
                        return Err(HarnessError::BadConfig(
                            "top-k sweep needs an explicit feature count; use synthetic data"
                                .into(),
                        ))
                    }
                };
                cfg.defense.topk = Some(((value * n as f64).ceil() as usize).min(n));
                if let Some(a1) = &mut cfg.attack1 {
                    a1.released_only = true;
                }
            }
        }
        Ok(cfg)
    }
}

/// Run the whole experiment: every sweep setting x model x seed. Failures
/// are recorded in their row; the run continues.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    if cfg.models.is_empty() {
        return Err(HarnessError::BadConfig("no models configured".into()));
    }
    if cfg.attack1.is_none() && cfg.attack2.is_none() {
        return Err(HarnessError::BadConfig("no attacks selected".into()));
    }
    let mut rows = Vec::new();
    for (setting, value) in cfg.sweep.settings() {
        for model in &cfg.models {
            let base = RunConfig {
                dataset: cfg.dataset.clone(),
                model: *model,
                explain: cfg.explain,
                defense: cfg.defense.clone(),
                attack1: cfg.attack1,
                attack2: cfg.attack2,
                val_rows: cfg.eval.val_rows,
                reference_count: cfg.eval.reference_count,
                use_tcp: cfg.eval.use_tcp,
            };
            let resolved = cfg.sweep.apply(&base, value)?;
            for &seed in &cfg.eval.seeds {
                let started = std::time::Instant::now();
                let mut row = ResultRow {
                    experiment: cfg.name.clone(),
                    setting: setting.clone(),
                    setting_value: value,
                    model: model.label().to_owned(),
                    seed,
                    attack1_l1: None,
                    attack2_sr: None,
                    attack2_l1_recovered: None,
                    rge_l1: f64::NAN,
                    rgu_l1: f64::NAN,
                    rgn_l1: f64::NAN,
                    per_feature_l1: Vec::new(),
                    per_feature_macc: Vec::new(),
                    wall_time_s: 0.0,
                    error: None,
                };
                match run_single(&resolved, seed) {
                    Ok(outcome) => {
                        row.attack1_l1 = outcome.attack1_l1;
                        row.attack2_sr = outcome.attack2_sr;
                        row.attack2_l1_recovered = outcome.attack2_recovered_l1;
                        row.rge_l1 = outcome.rge_l1;
                        row.rgu_l1 = outcome.rgu_l1;
                        row.rgn_l1 = outcome.rgn_l1;
                        row.per_feature_l1 = outcome.attack1_per_feature;
                        row.per_feature_macc = outcome.macc;
                    }
                    Err(e) => {
                        row.error = Some(e.to_string());
                    }
                }
                row.wall_time_s = started.elapsed().as_secs_f64();
                rows.push(row);
            }
        }
    }
    Ok(ResultTable { rows })
}
