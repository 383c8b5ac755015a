use std::fmt;
use std::str::FromStr;

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_ops::{closing, disk_offsets};
use crate::map::SaliencyMap;

/// How the segmenter mask is merged with the coarse prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RefineStrategy {
    Max,
    Add,
    WeightedAdd { weight: f32 },
    Morphological { se_radius: usize },
}

impl Default for RefineStrategy {
    fn default() -> Self {
        Self::Max
    }
}

impl RefineStrategy {
    /// Parses a strategy name; `weight` and `se_radius` fill in the parameters
    /// of the strategies that take one.
    pub fn parse(name: &str, weight: f32, se_radius: usize) -> Result<Self> {
        let s = match name {
            "max" => Self::Max,
            "add" => Self::Add,
            "weighted_add" => Self::WeightedAdd { weight },
            "morphological" => Self::Morphological { se_radius },
            other => return Err(Error::UnknownStrategy(other.to_owned())),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Max => "max",
            Self::Add => "add",
            Self::WeightedAdd { .. } => "weighted_add",
            Self::Morphological { .. } => "morphological",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::WeightedAdd { weight } if !(0.0..=1.0).contains(&weight) => {
                Err(Error::OutOfRange {
                    context: "weighted_add weight",
                    value: weight as f64,
                })
            }
            Self::Morphological { se_radius: 0 } => Err(Error::OutOfRange {
                context: "morphological se_radius",
                value: 0.0,
            }),
            _ => Ok(()),
        }
    }
}

impl FromStr for RefineStrategy {
    type Err = Error;

    /// Name with default parameters (`weight = 0.5`, `se_radius = 3`).
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, 0.5, 3)
    }
}

impl fmt::Display for RefineStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn combine(a: &SaliencyMap, b: &SaliencyMap, op: impl Fn(f32, f32) -> f32) -> SaliencyMap {
    SaliencyMap::from_clamped(
        Zip::from(a.as_array())
            .and(b.as_array())
            .map_collect(|&x, &y| op(x, y)),
    )
}

/// Fuses the coarse-side map `base` with the segmenter map `seg`.
pub fn refine(
    base: &SaliencyMap,
    seg: &SaliencyMap,
    strategy: RefineStrategy,
) -> Result<SaliencyMap> {
    base.ensure_same_dim("refinement inputs", seg.dim())?;
    strategy.validate()?;
    Ok(match strategy {
        RefineStrategy::Max => combine(base, seg, f32::max),
        RefineStrategy::Add => combine(base, seg, |x, y| x + y),
        RefineStrategy::WeightedAdd { weight } => {
            combine(base, seg, |x, y| weight * x + (1.0 - weight) * y)
        }
        RefineStrategy::Morphological { se_radius } => {
            let fused = combine(base, seg, f32::max);
            SaliencyMap::from_clamped(closing(fused.as_array(), &disk_offsets(se_radius)))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn map(v: &[f32]) -> SaliencyMap {
        SaliencyMap::new(Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn strategies_on_hand_values() {
        let a = map(&[0.2, 0.9, 0.0]);
        let b = map(&[0.5, 0.4, 0.0]);
        assert_eq!(
            refine(&a, &b, RefineStrategy::Max).unwrap(),
            map(&[0.5, 0.9, 0.0])
        );
        assert_eq!(
            refine(&a, &b, RefineStrategy::Add).unwrap(),
            map(&[0.7, 1.0, 0.0])
        );
        let w = refine(&a, &b, RefineStrategy::WeightedAdd { weight: 0.25 }).unwrap();
        assert!((w.as_array()[[0, 0]] - 0.425).abs() < 1e-6);
    }

    #[test]
    fn parse_names() {
        assert_eq!(
            "max".parse::<RefineStrategy>().unwrap(),
            RefineStrategy::Max
        );
        assert!(matches!(
            "crf".parse::<RefineStrategy>(),
            Err(Error::UnknownStrategy(_))
        ));
        assert!(RefineStrategy::parse("weighted_add", 1.5, 1).is_err());
    }

    #[test]
    fn shape_mismatch() {
        assert!(refine(&map(&[0.0]), &map(&[0.0, 1.0]), RefineStrategy::Max).is_err());
    }
}
