//! The constant-curvature adversarial autoencoder.
//!
//! The encoder maps data into the ambient space `R^{d+1}` with no projection.
//! Training alternates three updates on each mini-batch:
//!
//! 1. reconstruction: encoder + decoder minimise BCE(x, D(E(x)));
//! 2. critic: maximise `E[log C̃(z_prior)] + E[log(1 − C̃(E(x)))]`;
//! 3. encoder: minimise `−E[log C̃(E(x))]` (non-saturating form),
//!
//! where `C̃(z) = (C(z) + μ(z)) / 2` averages the critic probability with the
//! membership degree of `z`. The membership path has no critic parameters,
//! so step 2 only moves `C`, while step 3 receives gradients from both paths.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::dynamic_binarise;
use crate::error::{Error, Result};
use crate::geometry::{
    self, level_deviation, membership, membership_with_grad, Curvature, MembershipWidth,
};
use crate::nn::{bce, bce_loss, Activation, Adam, MlpStack, BCE_EPS};
use crate::priors::{PriorSampler, PriorSpec};
use crate::rng;

/// Named seeds; every random choice in an experiment draws from one of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub split: u64,
    pub init: u64,
    pub shuffle: u64,
    pub binarise: u64,
    pub prior: u64,
    pub labels: u64,
    pub synthetic: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            split: 1,
            init: 2,
            shuffle: 3,
            binarise: 4,
            prior: 5,
            labels: 6,
            synthetic: 7,
        }
    }
}

impl Seeds {
    /// Derives every seed from a single value. Derived seeds fit in 63 bits
    /// so they survive formats with signed 64-bit integers.
    pub fn from_base(base: u64) -> Self {
        let d = Seeds::default();
        let mix = |s: u64| base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(s) >> 1;
        Seeds {
            split: mix(d.split),
            init: mix(d.init),
            shuffle: mix(d.shuffle),
            binarise: mix(d.binarise),
            prior: mix(d.prior),
            labels: mix(d.labels),
            synthetic: mix(d.synthetic),
        }
    }
}

/// Architecture and optimisation settings. Defaults follow the MNIST setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub critic_hidden: usize,
    pub leaky_alpha: f64,
    pub l2: f64,
    pub sigma_m: f64,
    pub latent_dim: usize,
    pub kappa: Curvature,
    pub max_epochs: usize,
    pub patience: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub project_before_decode: bool,
    /// Resample binary training inputs every epoch.
    pub binarise: bool,
    pub seeds: Seeds,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 1024,
            learning_rate: 0.001,
            critic_hidden: 64,
            leaky_alpha: 0.3,
            l2: 0.01,
            sigma_m: 5.0,
            latent_dim: 20,
            kappa: Curvature::Spherical,
            max_epochs: 1000,
            patience: 50,
            encoder_hidden: vec![256, 128],
            decoder_hidden: vec![128, 256],
            project_before_decode: false,
            binarise: true,
            seeds: Seeds::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive_counts = [
            ("batch_size", self.batch_size),
            ("critic_hidden", self.critic_hidden),
            ("latent_dim", self.latent_dim),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ];
        for (name, v) in positive_counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        let positive_reals = [
            ("learning_rate", self.learning_rate),
            ("sigma_m", self.sigma_m),
        ];
        for (name, v) in positive_reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.leaky_alpha >= 0.0 && self.leaky_alpha.is_finite()) {
            return Err(Error::Config("leaky_alpha must be non-negative".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        if self.encoder_hidden.contains(&0) || self.decoder_hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Training-time optimiser state, one Adam instance per update phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimisers {
    pub autoencoder: Adam,
    pub critic: Adam,
    pub encoder: Adam,
}

impl Optimisers {
    pub fn new(learning_rate: f64) -> Self {
        Optimisers {
            autoencoder: Adam::new(learning_rate),
            critic: Adam::new(learning_rate),
            encoder: Adam::new(learning_rate),
        }
    }
}

/// How one latent row reached the manifold in the training-time projection.
#[derive(Debug, Clone, Copy)]
enum Placement {
    Projected,
    Lifted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcmAae {
    pub encoder: MlpStack,
    pub decoder: MlpStack,
    pub critic: MlpStack,
    pub curvature: Curvature,
    pub width: MembershipWidth,
    pub project_before_decode: bool,
}

impl CcmAae {
    /// Fresh Glorot-initialised model for inputs of width `input_dim`.
    pub fn new(input_dim: usize, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let ambient = cfg.latent_dim + 1;
        let mut r = rng::seeded(cfg.seeds.init, 0);

        let mut enc_shape: Vec<(usize, Activation)> = cfg
            .encoder_hidden
            .iter()
            .map(|&u| (u, Activation::Relu))
            .collect();
        enc_shape.push((ambient, Activation::Linear));
        let encoder = MlpStack::glorot(input_dim, &enc_shape, 0.0, &mut r)?;

        let mut dec_shape: Vec<(usize, Activation)> = cfg
            .decoder_hidden
            .iter()
            .map(|&u| (u, Activation::Relu))
            .collect();
        dec_shape.push((input_dim, Activation::Sigmoid));
        let decoder = MlpStack::glorot(ambient, &dec_shape, 0.0, &mut r)?;

        let leaky = Activation::LeakyRelu {
            alpha: cfg.leaky_alpha,
        };
        let critic = MlpStack::glorot(
            ambient,
            &[
                (cfg.critic_hidden, leaky),
                (cfg.critic_hidden, leaky),
                (1, Activation::Sigmoid),
            ],
            cfg.l2,
            &mut r,
        )?;

        CcmAae::from_parts(
            encoder,
            decoder,
            critic,
            cfg.kappa,
            MembershipWidth::new(cfg.sigma_m)?,
            cfg.project_before_decode,
        )
    }

    pub fn from_parts(
        encoder: MlpStack,
        decoder: MlpStack,
        critic: MlpStack,
        curvature: Curvature,
        width: MembershipWidth,
        project_before_decode: bool,
    ) -> Result<Self> {
        let ambient = encoder.output_dim();
        if ambient < 2 {
            return Err(Error::Dimension("latent width must be at least 2".into()));
        }
        if decoder.input_dim() != ambient || critic.input_dim() != ambient {
            return Err(Error::Dimension(format!(
                "encoder emits {ambient} values but decoder takes {} and critic takes {}",
                decoder.input_dim(),
                critic.input_dim()
            )));
        }
        if critic.output_dim() != 1 {
            return Err(Error::Dimension("critic must have a single output".into()));
        }
        if decoder.output_dim() != encoder.input_dim() {
            return Err(Error::Dimension(format!(
                "decoder emits {} values, encoder takes {}",
                decoder.output_dim(),
                encoder.input_dim()
            )));
        }
        Ok(CcmAae {
            encoder,
            decoder,
            critic,
            curvature,
            width,
            project_before_decode,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Manifold dimension `d`.
    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim() - 1
    }

    /// Raw ambient embeddings.
    pub fn encode(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.encoder.predict(x)
    }

    /// Decodes latent codes, projecting them first when the policy is on.
    /// Unprojectable codes are an error.
    pub fn decode(&self, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_latent(&z)?;
        if self.project_before_decode {
            let mut p = z.to_owned();
            for (i, mut row) in p.rows_mut().into_iter().enumerate() {
                let q =
                    geometry::project_to_ccm(row.as_slice().expect("row-major"), self.curvature)
                        .map_err(|e| match e {
                            Error::Unprojectable(m) => {
                                Error::Unprojectable(format!("row {i}: {m}"))
                            }
                            other => other,
                        })?;
                row.iter_mut().zip(q.iter()).for_each(|(o, v)| *o = *v);
            }
            self.decoder.predict(p.view())
        } else {
            self.decoder.predict(z)
        }
    }

    /// Reconstruction through the training-time latent path.
    pub fn reconstruct(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let z = self.encode(x)?;
        let (zp, _) = self.training_latent(z);
        self.decoder.predict(zp.view())
    }

    /// Mean BCE between `target` and the reconstruction of `x`.
    pub fn reconstruction_loss(
        &self,
        x: ArrayView2<'_, f64>,
        target: ArrayView2<'_, f64>,
    ) -> Result<f64> {
        bce_loss(self.reconstruct(x)?.view(), target)
    }

    /// `C̃(z) = (C(z) + μ(z)) / 2` for each row.
    pub fn combined_critic(&self, z: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check_latent(&z)?;
        let c = self.critic.predict(z)?;
        Ok(Array1::from_iter(
            z.rows().into_iter().zip(c.column(0)).map(|(row, &ci)| {
                let mu = membership(&row.to_vec(), self.curvature, self.width);
                0.5 * (ci + mu)
            }),
        ))
    }

    pub fn mean_membership(&self, z: ArrayView2<'_, f64>) -> f64 {
        let total: f64 = z
            .rows()
            .into_iter()
            .map(|r| membership(&r.to_vec(), self.curvature, self.width))
            .sum();
        total / z.nrows().max(1) as f64
    }

    fn check_latent(&self, z: &ArrayView2<'_, f64>) -> Result<()> {
        if z.ncols() != self.latent_dim() + 1 {
            return Err(Error::Dimension(format!(
                "latent batch has {} columns, model expects {}",
                z.ncols(),
                self.latent_dim() + 1
            )));
        }
        Ok(())
    }

    /// Latent codes as the decoder sees them during training. With the
    /// projection policy on, rows are projected; hyperbolic rows outside the
    /// light cone are lifted onto the hyperboloid instead.
    fn training_latent(&self, z: Array2<f64>) -> (Array2<f64>, Vec<Placement>) {
        if !self.project_before_decode {
            return (z, Vec::new());
        }
        let mut out = z;
        let mut placements = Vec::with_capacity(out.nrows());
        for mut row in out.rows_mut() {
            let src = row.to_vec();
            let (p, how) = match geometry::project_to_ccm(&src, self.curvature) {
                Ok(p) => (p.into_inner(), Placement::Projected),
                Err(_) if self.curvature == Curvature::Hyperbolic => {
                    (geometry::lift_to_hyperboloid(&src), Placement::Lifted)
                }
                // A zero embedding on the sphere; pass through.
                Err(_) => (src, Placement::Lifted),
            };
            row.iter_mut().zip(p).for_each(|(o, v)| *o = v);
            placements.push(how);
        }
        (out, placements)
    }

    fn training_latent_vjp(
        &self,
        z: &Array2<f64>,
        placements: &[Placement],
        upstream: Array2<f64>,
    ) -> Result<Array2<f64>> {
        if !self.project_before_decode {
            return Ok(upstream);
        }
        let mut out = upstream;
        for ((zr, mut gr), how) in z.rows().into_iter().zip(out.rows_mut()).zip(placements) {
            let zs = zr.to_vec();
            let g = gr.to_vec();
            let back = match how {
                Placement::Projected => geometry::project_to_ccm_vjp(&zs, self.curvature, &g)?,
                Placement::Lifted if self.curvature == Curvature::Hyperbolic => {
                    geometry::lift_to_hyperboloid_vjp(&zs, &g)
                }
                Placement::Lifted => g,
            };
            gr.iter_mut().zip(back).for_each(|(o, v)| *o = v);
        }
        Ok(out)
    }

    /// One Adam update of encoder and decoder on BCE(x, D(E(x))). Returns the
    /// loss before the update.
    pub fn reconstruction_step(&mut self, x: ArrayView2<'_, f64>, opt: &mut Adam) -> Result<f64> {
        let z = self.encoder.forward(x)?;
        let (zp, placements) = self.training_latent(z.clone());
        let y = self.decoder.forward(zp.view())?;
        let (loss, grad) = bce(y.view(), x)?;
        let g_latent = self.decoder.backward(grad.view())?;
        let g_z = self.training_latent_vjp(&z, &placements, g_latent)?;
        self.encoder.backward(g_z.view())?;
        opt.step_stacks(&mut [&mut self.encoder, &mut self.decoder])?;
        Ok(loss)
    }

    /// One Adam update of the critic. Returns the critic objective
    /// (negated log-likelihood plus L2 penalty) before the update.
    pub fn critic_step(
        &mut self,
        x: ArrayView2<'_, f64>,
        prior_batch: ArrayView2<'_, f64>,
        opt: &mut Adam,
    ) -> Result<f64> {
        self.check_latent(&prior_batch)?;
        let z_emb = self.encoder.predict(x)?;
        let n_prior = prior_batch.nrows();
        let n_emb = z_emb.nrows();
        if n_prior == 0 || n_emb == 0 {
            return Err(Error::Dimension(
                "critic step needs non-empty batches".into(),
            ));
        }
        let both = ndarray::concatenate(Axis(0), &[prior_batch, z_emb.view()])
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let c = self.critic.forward(both.view())?;

        let mut loss = 0.0;
        let mut upstream = Array2::zeros((n_prior + n_emb, 1));
        for (i, row) in both.rows().into_iter().enumerate() {
            let mu = membership(
                row.as_slice().expect("row-major"),
                self.curvature,
                self.width,
            );
            let combined = 0.5 * (c[[i, 0]] + mu);
            let clamped = combined.clamp(BCE_EPS, 1.0 - BCE_EPS);
            let interior = combined > BCE_EPS && combined < 1.0 - BCE_EPS;
            if i < n_prior {
                loss -= clamped.ln() / n_prior as f64;
                if interior {
                    upstream[[i, 0]] = -0.5 / (n_prior as f64 * clamped);
                }
            } else {
                loss -= (1.0 - clamped).ln() / n_emb as f64;
                if interior {
                    upstream[[i, 0]] = 0.5 / (n_emb as f64 * (1.0 - clamped));
                }
            }
        }
        loss += self.critic.l2_penalty();
        self.critic.backward(upstream.view())?;
        opt.step_stacks(&mut [&mut self.critic])?;
        Ok(loss)
    }

    /// One Adam update of the encoder on `−E[log C̃(E(x))]`. Returns the loss
    /// before the update.
    pub fn encoder_regularisation_step(
        &mut self,
        x: ArrayView2<'_, f64>,
        opt: &mut Adam,
    ) -> Result<f64> {
        let z = self.encoder.forward(x)?;
        let c = self.critic.forward(z.view())?;
        let n = z.nrows() as f64;
        let mut loss = 0.0;
        let mut g_critic = Array2::zeros((z.nrows(), 1));
        let mut g_membership = Array2::zeros(z.raw_dim());
        for (i, row) in z.rows().into_iter().enumerate() {
            let (mu, dmu) = membership_with_grad(
                row.as_slice().expect("row-major"),
                self.curvature,
                self.width,
            );
            let combined = 0.5 * (c[[i, 0]] + mu);
            let clamped = combined.clamp(BCE_EPS, 1.0 - BCE_EPS);
            loss -= clamped.ln() / n;
            if combined > BCE_EPS && combined < 1.0 - BCE_EPS {
                let g = -1.0 / (n * clamped);
                g_critic[[i, 0]] = 0.5 * g;
                for (o, d) in g_membership.row_mut(i).iter_mut().zip(&dmu) {
                    *o = 0.5 * g * d;
                }
            }
        }
        let mut g_z = self.critic.backward(g_critic.view())?;
        // The critic's buffers now hold gradients it must not be stepped with.
        self.critic.zero_grads();
        g_z += &g_membership;
        self.encoder.backward(g_z.view())?;
        opt.step_stacks(&mut [&mut self.encoder])?;
        Ok(loss)
    }
}

/// One row of [`TrainHistory`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub reconstruction_loss: f64,
    pub critic_loss: f64,
    pub encoder_adversarial_loss: f64,
    /// Mean membership of the (unprojected) validation embeddings.
    pub mean_membership: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were restored.
    pub best_epoch: usize,
    pub best_validation_loss: f64,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,reconstruction_loss,critic_loss,encoder_adversarial_loss,mean_membership,validation_loss";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch,
                r.reconstruction_loss,
                r.critic_loss,
                r.encoder_adversarial_loss,
                r.mean_membership,
                r.validation_loss
            ));
        }
        out
    }
}

/// Tracks the best validation loss and decides when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records the loss of `epoch`; returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best >= self.patience)
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

fn select_rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

/// Runs the alternating training procedure with early stopping on the
/// validation reconstruction loss, then restores the best parameters.
///
/// With `cfg.binarise`, training inputs are resampled from their intensities
/// every epoch and validation inputs are binarised once.
pub fn train(
    model: &mut CcmAae,
    opts: &mut Optimisers,
    train_x: ArrayView2<'_, f64>,
    validation_x: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_x.nrows() == 0 || validation_x.nrows() == 0 {
        return Err(Error::Config(
            "training and validation sets must be non-empty".into(),
        ));
    }
    for (name, x) in [("training", &train_x), ("validation", &validation_x)] {
        if x.ncols() != model.input_dim() {
            return Err(Error::Dimension(format!(
                "{name} data has {} columns, model expects {}",
                x.ncols(),
                model.input_dim()
            )));
        }
    }
    let validation = if cfg.binarise {
        dynamic_binarise(validation_x, cfg.seeds.binarise, u64::MAX)?
    } else {
        validation_x.to_owned()
    };
    let mut prior = PriorSampler::new(PriorSpec::new(
        model.curvature,
        model.latent_dim(),
        cfg.seeds.prior,
    )?)?;

    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_model = model.clone();
    let mut history = TrainHistory::default();
    let n = train_x.nrows();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=cfg.max_epochs {
        let epoch_x = if cfg.binarise {
            dynamic_binarise(train_x, cfg.seeds.binarise, epoch as u64)?
        } else {
            train_x.to_owned()
        };
        rng::shuffle(
            &mut rng::seeded(cfg.seeds.shuffle, epoch as u64),
            &mut order,
        );

        let (mut rec, mut crit, mut adv) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = select_rows(&epoch_x, chunk);
            let zb = prior.sample(chunk.len());
            let w = chunk.len() as f64 / n as f64;
            rec += w * model.reconstruction_step(xb.view(), &mut opts.autoencoder)?;
            crit += w * model.critic_step(xb.view(), zb.view(), &mut opts.critic)?;
            adv += w * model.encoder_regularisation_step(xb.view(), &mut opts.encoder)?;
        }

        let z_val = model.encode(validation.view())?;
        let val_loss = model.reconstruction_loss(validation.view(), validation.view())?;
        let record = EpochRecord {
            epoch,
            reconstruction_loss: rec,
            critic_loss: crit,
            encoder_adversarial_loss: adv,
            mean_membership: model.mean_membership(z_val.view()),
            validation_loss: val_loss,
        };
        if !record.reconstruction_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::State(format!("training diverged at epoch {epoch}")));
        }
        history.epochs.push(record);

        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            best_model = model.clone();
        }
        if stop {
            break;
        }
    }
    let (best_epoch, best_loss) = stopper.best();
    history.best_epoch = best_epoch;
    history.best_validation_loss = best_loss;
    *model = best_model;
    Ok(history)
}

/// Mean `|<z,z> − 1/κ|` over the rows of `z`.
pub fn mean_level_deviation(z: ArrayView2<'_, f64>, k: Curvature) -> f64 {
    let total: f64 = z
        .rows()
        .into_iter()
        .map(|r| level_deviation(&r.to_vec(), k).abs())
        .sum();
    total / z.nrows().max(1) as f64
}
