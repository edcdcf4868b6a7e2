//! Model checkpoint container.
//!
//! A checkpoint is a single JSON document:
//!
//! ```text
//! {
//!   "format": "ccm-aae-checkpoint",
//!   "version": 1,
//!   "kappa": 1.0 | -1.0,
//!   "sigma_m": <f64>,
//!   "project_before_decode": <bool>,
//!   "encoder" | "decoder" | "critic": {
//!     "l2": <f64>,
//!     "layers": [{ "inputs", "outputs",
//!                  "activation": {"kind": "linear" | "relu" | "sigmoid"}
//!                              | {"kind": "leaky_relu", "alpha": <f64>},
//!                  "weights": [outputs*inputs, row-major], "bias": [outputs] }]
//!   },
//!   "optimisers": null | { "autoencoder" | "critic" | "encoder": {
//!     "learning_rate", "beta1", "beta2", "epsilon", "step",
//!     "first": [[..] per parameter tensor], "second": [[..]] } }
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so save/load is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aae::{CcmAae, Optimisers};
use crate::error::{Error, Result};
use crate::geometry::{Curvature, MembershipWidth};
use crate::nn::{MlpStack, StackRecord};

pub const FORMAT: &str = "ccm-aae-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kappa: Curvature,
    pub sigma_m: MembershipWidth,
    pub project_before_decode: bool,
    pub encoder: StackRecord,
    pub decoder: StackRecord,
    pub critic: StackRecord,
    pub optimisers: Option<Optimisers>,
}

impl Checkpoint {
    pub fn new(model: &CcmAae, optimisers: Option<&Optimisers>) -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            kappa: model.curvature,
            sigma_m: model.width,
            project_before_decode: model.project_before_decode,
            encoder: StackRecord::from(&model.encoder),
            decoder: StackRecord::from(&model.decoder),
            critic: StackRecord::from(&model.critic),
            optimisers: optimisers.cloned(),
        }
    }

    pub fn into_model(self) -> Result<(CcmAae, Option<Optimisers>)> {
        if self.format != FORMAT {
            return Err(Error::format(
                "format",
                format!("expected {FORMAT:?}, found {:?}", self.format),
            ));
        }
        if self.version != VERSION {
            return Err(Error::format(
                "version",
                format!("unsupported version {}", self.version),
            ));
        }
        let model = CcmAae::from_parts(
            MlpStack::try_from(self.encoder)?,
            MlpStack::try_from(self.decoder)?,
            MlpStack::try_from(self.critic)?,
            self.kappa,
            self.sigma_m,
            self.project_before_decode,
        )?;
        Ok((model, self.optimisers))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(&path, self.to_json()?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Checkpoint::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aae::TrainConfig;

    #[test]
    fn roundtrip_is_exact() {
        let cfg = TrainConfig {
            latent_dim: 2,
            kappa: Curvature::Hyperbolic,
            encoder_hidden: vec![6],
            decoder_hidden: vec![5],
            critic_hidden: 4,
            project_before_decode: true,
            ..TrainConfig::default()
        };
        let mut model = CcmAae::new(7, &cfg).unwrap();
        let mut opts = Optimisers::new(0.01);
        let x = ndarray::Array2::from_elem((3, 7), 0.25);
        model
            .reconstruction_step(x.view(), &mut opts.autoencoder)
            .unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        Checkpoint::new(&model, Some(&opts)).save(&path).unwrap();
        let (back, back_opts) = Checkpoint::load(&path).unwrap().into_model().unwrap();
        assert_eq!(back, model);
        assert_eq!(back_opts.unwrap(), opts);
    }

    #[test]
    fn wrong_version_rejected() {
        let cfg = TrainConfig {
            latent_dim: 2,
            encoder_hidden: vec![3],
            decoder_hidden: vec![3],
            critic_hidden: 3,
            ..TrainConfig::default()
        };
        let model = CcmAae::new(4, &cfg).unwrap();
        let mut ck = Checkpoint::new(&model, None);
        ck.version = 9;
        assert!(ck
            .clone()
            .into_model()
            .unwrap_err()
            .to_string()
            .contains("version"));
        ck.version = VERSION;
        ck.format = "other".into();
        assert!(ck.into_model().is_err());
        assert!(Checkpoint::from_json("{\"format\": 1}").is_err());
    }
}
