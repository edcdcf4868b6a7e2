//! End-to-end experiment plumbing shared by the command-line tool and the
//! acceptance suite: configuration, data loading, training and the K-NN
//! accuracy report.

use std::fmt::Write as _;
use std::path::PathBuf;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::aae::{self, CcmAae, Optimisers, TrainConfig, TrainHistory};
use crate::data::{self, ImageDataset, SplitSpec, Splits};
use crate::error::{Error, Result};
use crate::eval::{self, KnnConfig};
use crate::geometry::Curvature;

/// Binarisation streams for the evaluation inputs. Validation uses
/// `u64::MAX` inside [`aae::train`].
const TEST_STREAM: u64 = u64::MAX - 1;
const LABELLED_STREAM: u64 = u64::MAX - 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mnist,
    Synthetic,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(Task::Mnist),
            "synthetic" => Ok(Task::Synthetic),
            other => Err(Error::Config(format!(
                "task must be `mnist` or `synthetic`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n: usize,
    pub input_dim: usize,
    pub n_classes: usize,
    pub spread: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 6000,
            input_dim: 10,
            n_classes: 3,
            spread: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Neighbour count K.
    pub k: usize,
    /// Labelled points per class; one report row each.
    pub labelled: Vec<usize>,
    /// Label draws per row; repetition `r` uses label seed `labels + r`.
    pub repetitions: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 5,
            labelled: vec![100, 600, 1000],
            repetitions: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Directory holding the four MNIST IDX files.
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub synthetic: SyntheticConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: Task::Mnist,
            data_dir: None,
            out_dir: PathBuf::from("out"),
            synthetic: SyntheticConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// The desk-scale synthetic run: d = 2, batch 256, at most 300 epochs,
    /// evaluated with 20 labels per class.
    pub fn synthetic_desk(kappa: Curvature) -> Self {
        ExperimentConfig {
            task: Task::Synthetic,
            train: TrainConfig {
                latent_dim: 2,
                kappa,
                batch_size: 256,
                max_epochs: 300,
                encoder_hidden: vec![64, 32],
                decoder_hidden: vec![32, 64],
                ..TrainConfig::default()
            },
            eval: EvalConfig {
                k: 5,
                labelled: vec![20],
                repetitions: 5,
            },
            ..ExperimentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.eval.k == 0 {
            return Err(Error::Config("eval.k must be at least 1".into()));
        }
        if self.eval.labelled.is_empty() || self.eval.labelled.contains(&0) {
            return Err(Error::Config(
                "eval.labelled must list at least one positive count".into(),
            ));
        }
        if self.eval.repetitions == 0 {
            return Err(Error::Config("eval.repetitions must be at least 1".into()));
        }
        if self.task == Task::Synthetic {
            let s = &self.synthetic;
            if s.n == 0 || s.input_dim == 0 || s.n_classes < 2 {
                return Err(Error::Config(
                    "synthetic.n and synthetic.input_dim must be positive and n_classes at least 2"
                        .into(),
                ));
            }
            if !(s.spread >= 0.0 && s.spread.is_finite()) {
                return Err(Error::Config(
                    "synthetic.spread must be non-negative".into(),
                ));
            }
        }
        Ok(())
    }

    /// Loads (or generates) the corpus and cuts the three splits.
    pub fn load_splits(&self) -> Result<Splits> {
        let seeds = &self.train.seeds;
        match self.task {
            Task::Synthetic => {
                let s = &self.synthetic;
                let corpus = data::synthetic_clusters(
                    s.n,
                    s.input_dim,
                    s.n_classes,
                    s.spread,
                    seeds.synthetic,
                )?;
                data::split(&corpus, SplitSpec::proportional(s.n, seeds.split))
            }
            Task::Mnist => {
                let dir = self.data_dir.as_ref().ok_or_else(|| {
                    Error::Config(
                        "the mnist task needs data_dir (or the data root variable)".into(),
                    )
                })?;
                let corpus = data::load_mnist_corpus(dir)?;
                data::split(&corpus, SplitSpec::mnist(seeds.split))
            }
        }
    }

    /// A freshly initialised model for inputs of width `input_dim`.
    pub fn fresh_model(&self, input_dim: usize) -> Result<CcmAae> {
        CcmAae::new(input_dim, &self.train)
    }
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub model: CcmAae,
    pub optimisers: Optimisers,
    pub history: TrainHistory,
    /// Validation BCE of the model before the first update.
    pub untrained_validation_loss: f64,
}

pub fn run_training(cfg: &ExperimentConfig, splits: &Splits) -> Result<TrainedRun> {
    cfg.validate()?;
    let mut model = cfg.fresh_model(splits.train.dim())?;
    let validation = binarised(&splits.validation.pixels, cfg, u64::MAX)?;
    let untrained_validation_loss =
        model.reconstruction_loss(validation.view(), validation.view())?;
    let mut optimisers = Optimisers::new(cfg.train.learning_rate);
    let history = aae::train(
        &mut model,
        &mut optimisers,
        splits.train.pixels.view(),
        splits.validation.pixels.view(),
        &cfg.train,
    )?;
    Ok(TrainedRun {
        model,
        optimisers,
        history,
        untrained_validation_loss,
    })
}

fn binarised(pixels: &Array2<f64>, cfg: &ExperimentConfig, stream: u64) -> Result<Array2<f64>> {
    if cfg.train.binarise {
        data::dynamic_binarise(pixels.view(), cfg.train.seeds.binarise, stream)
    } else {
        Ok(pixels.clone())
    }
}

/// The test split as the model sees it at evaluation time.
pub fn evaluation_test_set(cfg: &ExperimentConfig, splits: &Splits) -> Result<ImageDataset> {
    ImageDataset::new(
        binarised(&splits.test.pixels, cfg, TEST_STREAM)?,
        splits.test.labels.clone(),
    )
}

fn evaluation_train_set(cfg: &ExperimentConfig, splits: &Splits) -> Result<ImageDataset> {
    ImageDataset::new(
        binarised(&splits.train.pixels, cfg, LABELLED_STREAM)?,
        splits.train.labels.clone(),
    )
}

/// Mean membership of the unprojected test embeddings.
pub fn test_membership(model: &CcmAae, cfg: &ExperimentConfig, splits: &Splits) -> Result<f64> {
    let test = evaluation_test_set(cfg, splits)?;
    Ok(model.mean_membership(model.encode(test.pixels.view())?.view()))
}

/// Validation BCE under the evaluation binarisation.
pub fn validation_loss(model: &CcmAae, cfg: &ExperimentConfig, splits: &Splits) -> Result<f64> {
    let v = binarised(&splits.validation.pixels, cfg, u64::MAX)?;
    model.reconstruction_loss(v.view(), v.view())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub labelled_per_class: usize,
    pub k: usize,
    pub accuracies: Vec<f64>,
}

impl AccuracyRow {
    pub fn mean(&self) -> f64 {
        self.accuracies.iter().sum::<f64>() / self.accuracies.len() as f64
    }

    /// Sample standard deviation; zero for a single repetition.
    pub fn std(&self) -> f64 {
        let n = self.accuracies.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let ss: f64 = self.accuracies.iter().map(|a| (a - m).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyReport {
    pub const CSV_HEADER: &'static str =
        "labelled_per_class,k,repetitions,mean_accuracy,std_accuracy";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.labelled_per_class,
                r.k,
                r.accuracies.len(),
                r.mean(),
                r.std()
            );
        }
        out
    }

    /// Human-readable lines such as `l=100  91.4 ±0.4` (percentages).
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "l={:<5} K={}  {:.1} ±{:.1}",
                r.labelled_per_class,
                r.k,
                100.0 * r.mean(),
                100.0 * r.std()
            );
        }
        out
    }
}

/// Geodesic K-NN accuracy on the test split for every configured `l`.
pub fn evaluate(model: &CcmAae, cfg: &ExperimentConfig, splits: &Splits) -> Result<AccuracyReport> {
    cfg.validate()?;
    if splits.train.dim() != model.input_dim() {
        return Err(Error::Dimension(format!(
            "data has {} features but the model expects {}",
            splits.train.dim(),
            model.input_dim()
        )));
    }
    let train = evaluation_train_set(cfg, splits)?;
    let test = evaluation_test_set(cfg, splits)?;
    let rows = cfg
        .eval
        .labelled
        .iter()
        .map(|&l| {
            let accuracies = (0..cfg.eval.repetitions as u64)
                .map(|r| {
                    let knn = KnnConfig {
                        k: cfg.eval.k,
                        labelled_per_class: l,
                        seed: cfg.train.seeds.labels.wrapping_add(r),
                    };
                    eval::semi_supervised_accuracy(model, &train, &test, &knn)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AccuracyRow {
                labelled_per_class: l,
                k: cfg.eval.k,
                accuracies,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AccuracyReport { rows })
}
