//! Model files: a header (kind, prior, trajectory shape, hyperparameters)
//! followed by the decoder and, for trained models, the auxiliary networks.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::decoder::{Decoder, GenerativeModel, TrajShape};
use super::infogan::InfoGanModel;
use super::prior::Prior;
use super::vae::VaeModel;
use crate::error::{Error, Result};
use crate::numkit::Mlp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vae,
    Infogan,
    /// Hand-built or crippled decoders used as test subjects.
    Fixture,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscriminatorNets {
    pub trunk: Mlp,
    pub d_head: Mlp,
    pub q_head: Mlp,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub model_kind: ModelKind,
    pub prior: Prior,
    pub traj_shape: TrajShape,
    pub hyperparams: BTreeMap<String, f64>,
    pub decoder: Decoder,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<Mlp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discriminator: Option<DiscriminatorNets>,
}

impl ModelFile {
    pub fn from_vae(m: &VaeModel) -> Self {
        let hyperparams = BTreeMap::from([
            ("beta".to_string(), m.beta),
            ("kl_target".to_string(), m.kl_target),
            ("latent_dim".to_string(), m.latent_dim() as f64),
        ]);
        Self {
            model_kind: ModelKind::Vae,
            prior: m.prior,
            traj_shape: m.traj_shape,
            hyperparams,
            decoder: Decoder::Network {
                network: m.decoder.clone(),
            },
            encoder: Some(m.encoder.clone()),
            discriminator: None,
        }
    }

    pub fn from_infogan(m: &InfoGanModel) -> Self {
        let hyperparams = BTreeMap::from([
            ("lambda".to_string(), m.lambda),
            ("latent_dim".to_string(), m.latent_dim() as f64),
        ]);
        Self {
            model_kind: ModelKind::Infogan,
            prior: m.prior,
            traj_shape: m.traj_shape,
            hyperparams,
            decoder: Decoder::Network {
                network: m.generator.clone(),
            },
            encoder: None,
            discriminator: Some(DiscriminatorNets {
                trunk: m.trunk.clone(),
                d_head: m.d_head.clone(),
                q_head: m.q_head.clone(),
            }),
        }
    }

    pub fn fixture(model: &GenerativeModel) -> Self {
        Self {
            model_kind: ModelKind::Fixture,
            prior: model.prior,
            traj_shape: model.traj_shape,
            hyperparams: BTreeMap::new(),
            decoder: model.decoder.clone(),
            encoder: None,
            discriminator: None,
        }
    }

    pub fn generative(&self) -> Result<GenerativeModel> {
        GenerativeModel::new(self.decoder.clone(), self.prior, self.traj_shape)
    }

    pub fn to_json(&self) -> Result<String> {
        if contains_analytic(&self.decoder) {
            return Err(Error::NotSerializable("analytic decoder"));
        }
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(s)?;
        f.generative()?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn contains_analytic(d: &Decoder) -> bool {
    match d {
        Decoder::Analytic(_) => true,
        Decoder::LatentClamp { inner, .. } => contains_analytic(inner),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genmodels::Architecture;
    use crate::numkit::{Matrix, RngStream};

    #[test]
    fn vae_file_round_trip() {
        let m = VaeModel::new(TrajShape::new(3, 2), 2, &Architecture::default(), 2.5, &RngStream::new(0)).unwrap();
        let f = ModelFile::from_vae(&m);
        let back = ModelFile::from_json(&f.to_json().unwrap()).unwrap();
        let z = Matrix::from_rows(&[[0.1, -0.4], [1.0, 0.2]]).unwrap();
        assert_eq!(
            f.generative().unwrap().generate(&z).unwrap(),
            back.generative().unwrap().generate(&z).unwrap()
        );
        assert_eq!(back.model_kind, ModelKind::Vae);
    }

    #[test]
    fn clamp_and_constant_round_trip() {
        let g = GenerativeModel::new(
            Decoder::LatentClamp {
                bound: 0.3,
                inner: Box::new(Decoder::Constant { output: vec![1.0; 6] }),
            },
            Prior::uniform(2),
            TrajShape::new(3, 2),
        )
        .unwrap();
        let s = ModelFile::fixture(&g).to_json().unwrap();
        assert_eq!(ModelFile::from_json(&s).unwrap().to_json().unwrap(), s);
    }
}
