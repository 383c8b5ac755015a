//! Hierarchical encoders producing features at strides 4, 8, 16 and 32.

use std::path::{Path, PathBuf};

use candle_core::{ModuleT, Result, Tensor};
use candle_nn::VarBuilder;
use serde::{Deserialize, Serialize};

use crate::layers::Cbr;
use crate::swin::{SwinV2, SwinV2Config};

pub trait Backbone: Send + Sync {
    /// Channel count of each of the four output levels.
    fn channels(&self) -> [usize; 4];
    /// Features at strides 4, 8, 16, 32, each `B×C_i×H_i×W_i`.
    fn forward_t(&self, x: &Tensor, train: bool) -> Result<[Tensor; 4]>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    /// Small randomly initialized CNN for desk-scale runs.
    Tiny,
    /// SwinV2-B, window 24, fine-tuned at 384².
    Swinv2Base,
    /// A shallow, narrow SwinV2 with the same structure, for tests.
    Swinv2Micro,
}

impl BackboneKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Tiny => "tiny",
            Self::Swinv2Base => "swinv2_base",
            Self::Swinv2Micro => "swinv2_micro",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [Self::Tiny, Self::Swinv2Base, Self::Swinv2Micro]
            .into_iter()
            .find(|k| k.name() == name)
    }

    /// File name of the pretrained weights inside the weight cache, if any exist.
    pub fn weights_file(self) -> Option<&'static str> {
        match self {
            Self::Swinv2Base => Some("swinv2_base_window12to24_192to384.safetensors"),
            _ => None,
        }
    }

    pub fn build(self, resolution: usize, vb: VarBuilder) -> Result<Box<dyn Backbone>> {
        Ok(match self {
            Self::Tiny => Box::new(TinyCnn::new([16, 32, 48, 64], vb)?),
            Self::Swinv2Base => Box::new(SwinV2::new(&SwinV2Config::base_384(resolution), vb)?),
            Self::Swinv2Micro => Box::new(SwinV2::new(&SwinV2Config::micro(resolution), vb)?),
        })
    }
}

/// Location of pretrained weights for `kind` under `cache`.
pub fn pretrained_path(kind: BackboneKind, cache: &Path) -> Option<PathBuf> {
    kind.weights_file().map(|f| cache.join(f))
}

/// Four stride-2 stages of two CBR blocks each, after a stride-2 stem.
pub struct TinyCnn {
    stem: Cbr,
    stages: Vec<(Cbr, Cbr)>,
    channels: [usize; 4],
}

impl TinyCnn {
    pub fn new(channels: [usize; 4], vb: VarBuilder) -> Result<Self> {
        let stem = Cbr::with_stride(3, channels[0] / 2, 2, vb.pp("stem"))?;
        let mut stages = Vec::with_capacity(4);
        let mut c_in = channels[0] / 2;
        for (i, &c) in channels.iter().enumerate() {
            let vb = vb.pp(format!("stages.{i}"));
            stages.push((
                Cbr::with_stride(c_in, c, 2, vb.pp("down"))?,
                Cbr::new(c, c, vb.pp("conv"))?,
            ));
            c_in = c;
        }
        Ok(Self {
            stem,
            stages,
            channels,
        })
    }
}

impl Backbone for TinyCnn {
    fn channels(&self) -> [usize; 4] {
        self.channels
    }

    fn forward_t(&self, x: &Tensor, train: bool) -> Result<[Tensor; 4]> {
        let mut h = self.stem.forward_t(x, train)?;
        let mut out = Vec::with_capacity(4);
        for (down, conv) in &self.stages {
            h = conv.forward_t(&down.forward_t(&h, train)?, train)?;
            out.push(h.clone());
        }
        let [a, b, c, d]: [Tensor; 4] = out.try_into().expect("four stages");
        Ok([a, b, c, d])
    }
}
