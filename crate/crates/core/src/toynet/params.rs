use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posegeom::POSE_VECTOR_LEN;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Layer widths of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub input: usize,
    pub hidden: usize,
    pub feature: usize,
    pub reid: usize,
    pub pose: usize,
    pub n_ids: usize,
    pub n_colors: usize,
    pub n_types: usize,
}

impl NetDims {
    pub fn new(input: usize, hidden: usize, feature: usize, reid: usize, n_ids: usize, n_colors: usize, n_types: usize) -> Self {
        Self { input, hidden, feature, reid, pose: POSE_VECTOR_LEN, n_ids, n_colors, n_types }
    }

    /// Width of the trunk output concatenated with the pose vector.
    pub fn concat(&self) -> usize {
        self.feature + self.pose
    }

    fn validate(&self) -> Result<()> {
        let all = [self.input, self.hidden, self.feature, self.reid, self.n_ids, self.n_colors, self.n_types];
        if all.contains(&0) {
            return Err(Error::invalid(format!("network dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Weights are stored `out x in`; every array is in standard layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyNetParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub wr: Array2<f64>,
    pub br: Array1<f64>,
    pub wid: Array2<f64>,
    pub bid: Array1<f64>,
    pub wc: Array2<f64>,
    pub bc: Array1<f64>,
    pub wt: Array2<f64>,
    pub bt: Array1<f64>,
    pub leaky_slope: f64,
}

/// Gradients share the parameter layout.
pub type Gradients = ToyNetParams;

pub const TENSOR_NAMES: [&str; 12] = ["W1", "b1", "W2", "b2", "Wr", "br", "Wid", "bid", "Wc", "bc", "Wt", "bt"];

fn xavier<R: Rng + ?Sized>(out: usize, inp: usize, rng: &mut R) -> Array2<f64> {
    let s = (6.0 / (inp + out) as f64).sqrt();
    Array2::from_shape_simple_fn((out, inp), || rng.random_range(-s..=s))
}

impl ToyNetParams {
    /// Xavier-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(dims: &NetDims, leaky_slope: f64, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        let w1 = xavier(dims.hidden, dims.input, rng);
        let w2 = xavier(dims.feature, dims.hidden, rng);
        let wr = xavier(dims.reid, dims.concat(), rng);
        let wid = xavier(dims.n_ids, dims.reid, rng);
        let wc = xavier(dims.n_colors, dims.reid, rng);
        let wt = xavier(dims.n_types, dims.reid, rng);
        Ok(Self {
            b1: Array1::zeros(dims.hidden),
            b2: Array1::zeros(dims.feature),
            br: Array1::zeros(dims.reid),
            bid: Array1::zeros(dims.n_ids),
            bc: Array1::zeros(dims.n_colors),
            bt: Array1::zeros(dims.n_types),
            w1,
            w2,
            wr,
            wid,
            wc,
            wt,
            leaky_slope,
        })
    }

    pub fn zeros(dims: &NetDims) -> Self {
        Self {
            w1: Array2::zeros((dims.hidden, dims.input)),
            b1: Array1::zeros(dims.hidden),
            w2: Array2::zeros((dims.feature, dims.hidden)),
            b2: Array1::zeros(dims.feature),
            wr: Array2::zeros((dims.reid, dims.concat())),
            br: Array1::zeros(dims.reid),
            wid: Array2::zeros((dims.n_ids, dims.reid)),
            bid: Array1::zeros(dims.n_ids),
            wc: Array2::zeros((dims.n_colors, dims.reid)),
            bc: Array1::zeros(dims.n_colors),
            wt: Array2::zeros((dims.n_types, dims.reid)),
            bt: Array1::zeros(dims.n_types),
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(&self.dims());
        z.leaky_slope = self.leaky_slope;
        z
    }

    pub fn dims(&self) -> NetDims {
        NetDims {
            input: self.w1.ncols(),
            hidden: self.w1.nrows(),
            feature: self.w2.nrows(),
            reid: self.wr.nrows(),
            pose: self.wr.ncols() - self.w2.nrows(),
            n_ids: self.wid.nrows(),
            n_colors: self.wc.nrows(),
            n_types: self.wt.nrows(),
        }
    }

    /// Checks shapes, layout and finiteness, e.g. after loading from disk.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        let expected = Self::zeros(&d);
        let shapes_ok = self.tensors().iter().zip(expected.tensors()).all(|(a, b)| a.len() == b.len())
            && self.b1.len() == d.hidden
            && self.w2.ncols() == d.hidden
            && self.wr.ncols() >= d.feature
            && [self.wid.ncols(), self.wc.ncols(), self.wt.ncols()] == [d.reid; 3];
        if !shapes_ok || [&self.w1, &self.w2, &self.wr, &self.wid, &self.wc, &self.wt].iter().any(|w| !w.is_standard_layout()) {
            return Err(Error::shape("inconsistent network parameter shapes"));
        }
        if !self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite())) || !self.leaky_slope.is_finite() {
            return Err(Error::NonFinite { context: "network parameters".into() });
        }
        Ok(())
    }

    /// Flat views of every tensor, in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [&[f64]; 12] {
        fn s(a: Option<&[f64]>) -> &[f64] {
            a.expect("parameters are contiguous")
        }
        [
            s(self.w1.as_slice()),
            s(self.b1.as_slice()),
            s(self.w2.as_slice()),
            s(self.b2.as_slice()),
            s(self.wr.as_slice()),
            s(self.br.as_slice()),
            s(self.wid.as_slice()),
            s(self.bid.as_slice()),
            s(self.wc.as_slice()),
            s(self.bc.as_slice()),
            s(self.wt.as_slice()),
            s(self.bt.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 12] {
        fn s(a: Option<&mut [f64]>) -> &mut [f64] {
            a.expect("parameters are contiguous")
        }
        [
            s(self.w1.as_slice_mut()),
            s(self.b1.as_slice_mut()),
            s(self.w2.as_slice_mut()),
            s(self.b2.as_slice_mut()),
            s(self.wr.as_slice_mut()),
            s(self.br.as_slice_mut()),
            s(self.wid.as_slice_mut()),
            s(self.bid.as_slice_mut()),
            s(self.wc.as_slice_mut()),
            s(self.bc.as_slice_mut()),
            s(self.wt.as_slice_mut()),
            s(self.bt.as_slice_mut()),
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}
