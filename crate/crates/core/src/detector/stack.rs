use crate::background::BackgroundModel;
use crate::error::{Error, Result};
use crate::imgcore::Frame;
use crate::nn::{normalize_stack, Tensor4};
use crate::registration::{warp_frame, TransformChain};

/// Current frame followed by the previous frames warped into it, ordered
/// t, t-1, t-2, ...
#[derive(Clone, Debug)]
pub struct AlignedFrames {
    pub slices: Vec<Frame>,
}

impl AlignedFrames {
    /// `history[k-1]` is frame t-k; it is warped by `h_t^{t-k}`.
    pub fn new(current: &Frame, history: &[Frame], chain: &TransformChain, depth: usize) -> Result<Self> {
        if history.len() < depth || chain.len() < depth {
            return Err(Error::MissingData(format!(
                "patch stacks need {depth} previous frames, have {} frames and {} transforms",
                history.len(),
                chain.len()
            )));
        }
        let mut slices = vec![current.clone()];
        for k in 1..=depth {
            slices.push(warp_frame(&history[k - 1], chain.get(k).unwrap(), current.width(), current.height())?);
        }
        Ok(Self { slices })
    }

    /// Reuses the warped history of a background model, warping only the
    /// lags it does not hold.
    pub fn from_model(
        current: &Frame,
        model: &BackgroundModel,
        history: &[Frame],
        chain: &TransformChain,
        depth: usize,
    ) -> Result<Self> {
        if model.aligned.len() >= depth {
            let mut slices = vec![current.clone()];
            slices.extend(model.aligned[..depth].iter().cloned());
            return Ok(Self { slices });
        }
        Self::new(current, history, chain, depth)
    }

    pub fn depth(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn width(&self) -> usize {
        self.slices[0].width()
    }

    pub fn height(&self) -> usize {
        self.slices[0].height()
    }

    pub fn stack(&self, center: (i64, i64), side: usize) -> PatchStack {
        let half = (side / 2) as i64;
        let mut data = Vec::with_capacity(self.slices.len() * side * side);
        for s in &self.slices {
            for j in 0..side as i64 {
                for i in 0..side as i64 {
                    data.push(s.get_or_zero(center.0 - half + i, center.1 - half + j) as f32);
                }
            }
        }
        PatchStack { side, center, data }
    }
}

/// `side x side` patches from each aligned slice, raw grey levels.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchStack {
    pub side: usize,
    pub center: (i64, i64),
    pub data: Vec<f32>,
}

impl PatchStack {
    pub fn slices(&self) -> usize {
        self.data.len() / (self.side * self.side)
    }

    pub fn normalized(&self) -> Vec<f32> {
        let mut v = self.data.clone();
        normalize_stack(&mut v);
        v
    }
}

/// Network input batch of normalised stacks.
pub fn batch_tensor(stacks: &[PatchStack]) -> Result<Tensor4<f32>> {
    let first = stacks
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty stack batch".into()))?;
    let (c, side) = (first.slices(), first.side);
    let mut data = Vec::with_capacity(stacks.len() * first.data.len());
    for s in stacks {
        if s.side != side || s.slices() != c {
            return Err(Error::DimensionMismatch("stacks in a batch differ in shape".into()));
        }
        data.extend(s.normalized());
    }
    Tensor4::new([stacks.len(), c, side, side], data)
}
