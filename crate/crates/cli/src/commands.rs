use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ccm_core::eval::{self, ChartPoint};
use ccm_core::experiment::{self, ExperimentConfig};
use ccm_core::{AmbientPoint, CcmAae, Checkpoint, Curvature};
use ndarray::s;

use crate::config::{self, ECHO_FILE};
use crate::{Chart, Failure, Mode};

type CmdResult = Result<(), Failure>;

fn usage<T, E: Into<anyhow::Error>>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Usage(e.into()))
}

fn runtime<T, E: Into<anyhow::Error>>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Runtime(e.into()))
}

/// Creates the output directory and writes the config echo into it.
fn prepare_out(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let dir = &cfg.out_dir;
    runtime(
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display())),
    )?;
    let text = runtime(config::echo(cfg))?;
    write(&dir.join(ECHO_FILE), &text)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    runtime(std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display())))
}

fn load_model(cfg: &ExperimentConfig, checkpoint: Option<PathBuf>) -> Result<CcmAae, Failure> {
    let path = checkpoint.unwrap_or_else(|| cfg.out_dir.join("checkpoint.json"));
    let (model, _) = usage(
        Checkpoint::load(&path)
            .and_then(Checkpoint::into_model)
            .with_context(|| format!("cannot load checkpoint {}", path.display())),
    )?;
    if model.latent_dim() != cfg.train.latent_dim || model.curvature != cfg.train.kappa {
        return Err(Failure::Usage(anyhow!(
            "checkpoint has d = {} and kappa = {}, configuration has d = {} and kappa = {}",
            model.latent_dim(),
            model.curvature,
            cfg.train.latent_dim,
            cfg.train.kappa
        )));
    }
    Ok(model)
}

fn load_splits(
    cfg: &ExperimentConfig,
    model: Option<&CcmAae>,
) -> Result<ccm_core::data::Splits, Failure> {
    let splits = usage(cfg.load_splits())?;
    if let Some(m) = model {
        if splits.train.dim() != m.input_dim() {
            return Err(Failure::Usage(anyhow!(
                "data has {} features, checkpoint expects {}",
                splits.train.dim(),
                m.input_dim()
            )));
        }
    }
    Ok(splits)
}

pub fn train(cfg: &ExperimentConfig) -> CmdResult {
    let splits = load_splits(cfg, None)?;
    prepare_out(cfg)?;
    let run = runtime(experiment::run_training(cfg, &splits))?;
    let dir = &cfg.out_dir;
    let ckpt = dir.join("checkpoint.json");
    runtime(Checkpoint::new(&run.model, Some(&run.optimisers)).save(&ckpt))?;
    write(&dir.join("history.csv"), &run.history.to_csv())?;
    let membership = runtime(experiment::test_membership(&run.model, cfg, &splits))?;
    println!(
        "trained {} epochs; best epoch {} with validation BCE {:.5} (untrained {:.5}); \
         test membership {:.4}",
        run.history.epochs.len(),
        run.history.best_epoch,
        run.history.best_validation_loss,
        run.untrained_validation_loss,
        membership
    );
    println!("checkpoint: {}", ckpt.display());
    Ok(())
}

pub fn eval(cfg: &ExperimentConfig, checkpoint: Option<PathBuf>) -> CmdResult {
    let model = load_model(cfg, checkpoint)?;
    let splits = load_splits(cfg, Some(&model))?;
    prepare_out(cfg)?;
    let report = runtime(experiment::evaluate(&model, cfg, &splits))?;
    write(&cfg.out_dir.join("report.csv"), &report.to_csv())?;
    print!("{}", report.summary());
    Ok(())
}

pub fn sample(cfg: &ExperimentConfig, checkpoint: Option<PathBuf>, n: usize) -> CmdResult {
    let model = load_model(cfg, checkpoint)?;
    prepare_out(cfg)?;
    let samples = runtime(eval::prior_samples(&model, n, cfg.train.seeds.prior))?;
    write(
        &cfg.out_dir.join("samples.csv"),
        &eval::pixels_csv("sample", samples.decoded.view()),
    )?;
    println!("wrote {n} samples");
    Ok(())
}

pub fn traverse(
    cfg: &ExperimentConfig,
    checkpoint: Option<PathBuf>,
    mode: Mode,
    steps: usize,
    from: usize,
    to: usize,
) -> CmdResult {
    if steps == 0 {
        return Err(Failure::Usage(anyhow!("--steps must be at least 1")));
    }
    let model = load_model(cfg, checkpoint)?;
    let traversal = match mode {
        Mode::Equator => {
            if model.curvature != Curvature::Spherical {
                return Err(Failure::Usage(anyhow!(
                    "equator traversal needs kappa = +1; use --mode geodesic"
                )));
            }
            runtime(eval::equator_traversal(
                &model,
                steps,
                cfg.train.seeds.prior,
            ))?
        }
        Mode::Geodesic => {
            let splits = load_splits(cfg, Some(&model))?;
            let test = runtime(experiment::evaluation_test_set(cfg, &splits))?;
            for (flag, i) in [("--from", from), ("--to", to)] {
                if i >= test.len() {
                    return Err(Failure::Usage(anyhow!(
                        "{flag} {i} is out of range for {} test points",
                        test.len()
                    )));
                }
            }
            let ends = test.select(&[from, to]);
            let z = runtime(model.encode(ends.pixels.view()))?;
            let placed = runtime(eval::place_on_manifold(z.view(), model.curvature))?;
            let a = runtime(AmbientPoint::new(placed.slice(s![0, ..]).to_vec()))?;
            let b = runtime(AmbientPoint::new(placed.slice(s![1, ..]).to_vec()))?;
            runtime(eval::geodesic_traversal(&model, &a, &b, steps))?
        }
    };
    prepare_out(cfg)?;
    write(&cfg.out_dir.join("traversal.csv"), &traversal.to_csv())?;
    println!("wrote {steps} traversal steps");
    Ok(())
}

pub fn project(
    cfg: &ExperimentConfig,
    checkpoint: Option<PathBuf>,
    chart: Option<Chart>,
) -> CmdResult {
    let model = load_model(cfg, checkpoint)?;
    if model.latent_dim() != 2 {
        return Err(Failure::Usage(anyhow!(
            "charts need d = 2, the checkpoint has d = {}",
            model.latent_dim()
        )));
    }
    let chart = chart.unwrap_or(match model.curvature {
        Curvature::Spherical => Chart::Aitoff,
        Curvature::Hyperbolic => Chart::Poincare,
    });
    let expected = match chart {
        Chart::Aitoff => Curvature::Spherical,
        Chart::Poincare => Curvature::Hyperbolic,
    };
    if model.curvature != expected {
        return Err(Failure::Usage(anyhow!(
            "the {chart:?} chart needs kappa = {expected}, the checkpoint has kappa = {}",
            model.curvature
        )));
    }
    let splits = load_splits(cfg, Some(&model))?;
    let test = runtime(experiment::evaluation_test_set(cfg, &splits))?;
    let z = runtime(model.encode(test.pixels.view()))?;
    let placed = runtime(eval::place_on_manifold(z.view(), model.curvature))?;
    let points = runtime(
        placed
            .rows()
            .into_iter()
            .map(|r| {
                let r = r.to_vec();
                match chart {
                    Chart::Aitoff => eval::aitoff_chart(&r),
                    Chart::Poincare => eval::poincare_chart(&r),
                }
            })
            .collect::<ccm_core::Result<Vec<ChartPoint>>>(),
    )?;
    prepare_out(cfg)?;
    write(
        &cfg.out_dir.join("chart.csv"),
        &eval::chart_csv(&points, &test.labels),
    )?;
    println!("wrote {} chart points", points.len());
    Ok(())
}
