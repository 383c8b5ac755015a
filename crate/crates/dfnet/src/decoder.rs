//! Top-down decoders, the boundary decoder and decision fusion.

use candle_core::{ModuleT, Result, Tensor};
use candle_nn::VarBuilder;

use crate::layers::{resize_like, Cbr};

/// Levels 2..5 of one pyramid, strides 4, 8, 16, 32.
#[derive(Clone, Debug)]
pub struct Pyramid(pub [Tensor; 4]);

impl Pyramid {
    /// Level `i ∈ {2,3,4,5}`.
    pub fn level(&self, i: usize) -> &Tensor {
        &self.0[i - 2]
    }
}

fn check_stride(hi: &Tensor, lo: &Tensor) -> crate::Result<()> {
    let (_, c1, h1, w1) = hi.dims4()?;
    let (_, c2, h2, w2) = lo.dims4()?;
    if c1 != c2 || h1 != 2 * h2 || w1 != 2 * w2 {
        return Err(crate::Error::ShapeMismatch {
            context: "pyramid stride",
            expected: vec![c2, 2 * h2, 2 * w2],
            found: vec![c1, h1, w1],
        });
    }
    Ok(())
}

/// Progressive top-down decoding with additive skips.
#[derive(Clone, Debug)]
pub struct BranchDecoder {
    c5: Cbr,
    c4: Cbr,
    c3: Cbr,
    c2: Cbr,
}

impl BranchDecoder {
    pub fn new(c: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            c5: Cbr::new(c, c, vb.pp("c5"))?,
            c4: Cbr::new(c, c, vb.pp("c4"))?,
            c3: Cbr::new(c, c, vb.pp("c3"))?,
            c2: Cbr::new(c, c, vb.pp("c2"))?,
        })
    }

    pub fn forward_t(&self, p: &Pyramid, train: bool) -> crate::Result<Tensor> {
        for i in 2..5 {
            check_stride(p.level(i), p.level(i + 1))?;
        }
        let up = |x: &Tensor, like: &Tensor| resize_like(x, like);
        let x = self.c5.forward_t(p.level(5), train)?;
        let x = (up(&x, p.level(4))? + p.level(4))?;
        let x = self.c4.forward_t(&x, train)?;
        let f3 = (up(&x, p.level(3))? + p.level(3))?;
        let x = self.c3.forward_t(&f3, train)?;
        let x = (up(&x, p.level(2))? + p.level(2))?;
        Ok(self.c2.forward_t(&x, train)?)
    }
}

/// Two CBR blocks over `[Up(F5_M) ; F2_M]`.
#[derive(Clone, Debug)]
pub struct BoundaryDecoder {
    a: Cbr,
    b: Cbr,
}

impl BoundaryDecoder {
    pub fn new(c: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            a: Cbr::new(2 * c, c, vb.pp("a"))?,
            b: Cbr::new(c, c, vb.pp("b"))?,
        })
    }

    pub fn forward_t(&self, f5: &Tensor, f2: &Tensor, train: bool) -> crate::Result<Tensor> {
        let (_, c5, _, _) = f5.dims4()?;
        let (_, c2, _, _) = f2.dims4()?;
        if c5 != c2 {
            return Err(crate::Error::ShapeMismatch {
                context: "boundary decoder",
                expected: vec![c2],
                found: vec![c5],
            });
        }
        let x = Tensor::cat(&[&resize_like(f5, f2)?, f2], 1)?;
        Ok(self.b.forward_t(&self.a.forward_t(&x, train)?, train)?)
    }
}

/// Two CBR blocks over the concatenated branch outputs.
#[derive(Clone, Debug)]
pub struct DecisionFusion {
    a: Cbr,
    b: Cbr,
}

impl DecisionFusion {
    pub fn new(c: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            a: Cbr::new(4 * c, c, vb.pp("a"))?,
            b: Cbr::new(c, c, vb.pp("b"))?,
        })
    }

    /// Convolution output of the first block, before normalization.
    pub fn pre_activation(
        &self,
        m: &Tensor,
        r: &Tensor,
        t: &Tensor,
        b: &Tensor,
    ) -> crate::Result<Tensor> {
        Ok(self.a.pre_activation(&Self::concat(m, r, t, b)?)?)
    }

    fn concat(m: &Tensor, r: &Tensor, t: &Tensor, b: &Tensor) -> crate::Result<Tensor> {
        for x in [r, t, b] {
            crate::error::ensure_same_shape("decision fusion", m, x)?;
        }
        Ok(Tensor::cat(&[m, r, t, b], 1)?)
    }

    pub fn forward_t(
        &self,
        m: &Tensor,
        r: &Tensor,
        t: &Tensor,
        b: &Tensor,
        train: bool,
    ) -> crate::Result<Tensor> {
        let x = Self::concat(m, r, t, b)?;
        Ok(self.b.forward_t(&self.a.forward_t(&x, train)?, train)?)
    }
}
