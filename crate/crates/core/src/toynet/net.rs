use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use super::params::{Gradients, ToyNetParams};
use crate::error::{Error, Result};
use crate::losses::{multitask_loss, HeadInput, LossComponents, LossWeights, TripletConfig, XentMode};

/// Every intermediate of a forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pub input: Array2<f64>,
    pub z1: Array2<f64>,
    pub h: Array2<f64>,
    pub z2: Array2<f64>,
    /// Trunk output concatenated with the pose vector.
    pub g: Array2<f64>,
    pub zr: Array2<f64>,
    /// ReID features, the retrieval embedding.
    pub r: Array2<f64>,
    pub id_logits: Array2<f64>,
    pub color_logits: Array2<f64>,
    pub type_logits: Array2<f64>,
}

fn leaky(z: &Array2<f64>, slope: f64) -> Array2<f64> {
    z.mapv(|v| if v > 0.0 { v } else { slope * v })
}

/// Multiplies `grad` by the activation derivative at `z`: 1 above zero, the
/// slope at or below it.
fn leaky_back(grad: &mut Array2<f64>, z: &Array2<f64>, slope: f64) {
    grad.zip_mut_with(z, |g, &v| {
        if v <= 0.0 {
            *g *= slope;
        }
    });
}

/// `a^T b` in standard layout (matrix products of transposed views may come
/// back column-major).
fn at_b(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let p = a.t().dot(b);
    if p.is_standard_layout() {
        p
    } else {
        p.as_standard_layout().into_owned()
    }
}

fn affine(x: ArrayView2<f64>, w: &Array2<f64>, b: &ndarray::Array1<f64>) -> Array2<f64> {
    x.dot(&w.t()) + b
}

pub fn forward(params: &ToyNetParams, descriptors: ArrayView2<f64>, poses: ArrayView2<f64>) -> Result<Activations> {
    let d = params.dims();
    if descriptors.ncols() != d.input || poses.ncols() != d.pose {
        return Err(Error::shape(format!(
            "inputs {}+{} wide, network expects {}+{}",
            descriptors.ncols(),
            poses.ncols(),
            d.input,
            d.pose
        )));
    }
    if descriptors.nrows() != poses.nrows() {
        return Err(Error::shape(format!(
            "{} descriptor rows vs {} pose rows",
            descriptors.nrows(),
            poses.nrows()
        )));
    }
    let slope = params.leaky_slope;
    let z1 = affine(descriptors, &params.w1, &params.b1);
    let h = leaky(&z1, slope);
    let z2 = affine(h.view(), &params.w2, &params.b2);
    let f = leaky(&z2, slope);
    let g = concatenate(Axis(1), &[f.view(), poses]).expect("row counts checked");
    let zr = affine(g.view(), &params.wr, &params.br);
    let r = leaky(&zr, slope);
    Ok(Activations {
        id_logits: affine(r.view(), &params.wid, &params.bid),
        color_logits: affine(r.view(), &params.wc, &params.bc),
        type_logits: affine(r.view(), &params.wt, &params.bt),
        input: descriptors.to_owned(),
        z1,
        h,
        z2,
        g,
        zr,
        r,
    })
}

/// Upstream gradients at the network outputs.
#[derive(Debug, Clone)]
pub struct OutputGrads {
    pub features: Array2<f64>,
    pub id_logits: Array2<f64>,
    pub color_logits: Option<Array2<f64>>,
    pub type_logits: Option<Array2<f64>>,
}

/// Back-propagates output gradients to every parameter. With `mask_pose`
/// the pose columns of `Wr` receive no gradient.
pub fn backward_from(params: &ToyNetParams, act: &Activations, up: &OutputGrads, mask_pose: bool) -> Gradients {
    let slope = params.leaky_slope;
    let mut grads = params.zeros_like();
    let mut dr = up.features.clone();

    let mut head = |dl: &Array2<f64>, w: &Array2<f64>, gw: &mut Array2<f64>, gb: &mut ndarray::Array1<f64>| {
        *gw = at_b(dl, &act.r);
        *gb = dl.sum_axis(Axis(0));
        dr += &dl.dot(w);
    };
    head(&up.id_logits, &params.wid, &mut grads.wid, &mut grads.bid);
    if let Some(dc) = &up.color_logits {
        head(dc, &params.wc, &mut grads.wc, &mut grads.bc);
    }
    if let Some(dt) = &up.type_logits {
        head(dt, &params.wt, &mut grads.wt, &mut grads.bt);
    }

    leaky_back(&mut dr, &act.zr, slope);
    grads.wr = at_b(&dr, &act.g);
    grads.br = dr.sum_axis(Axis(0));
    let feature = params.w2.nrows();
    if mask_pose {
        grads.wr.slice_mut(s![.., feature..]).fill(0.0);
    }
    let mut df = dr.dot(&params.wr.slice(s![.., ..feature]));

    leaky_back(&mut df, &act.z2, slope);
    grads.w2 = at_b(&df, &act.h);
    grads.b2 = df.sum_axis(Axis(0));
    let mut dh = df.dot(&params.w2);

    leaky_back(&mut dh, &act.z1, slope);
    grads.w1 = at_b(&dh, &act.input);
    grads.b1 = dh.sum_axis(Axis(0));
    grads
}

/// Labels of one batch. `color`/`vtype` are `None` when that head is off.
#[derive(Debug, Clone, Copy)]
pub struct BatchLabels<'a> {
    pub ids: &'a [usize],
    pub color: Option<&'a [usize]>,
    pub vtype: Option<&'a [usize]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossSettings {
    pub weights: LossWeights,
    pub triplet: TripletConfig,
    pub xent_mode: XentMode,
    pub mask_pose: bool,
}

/// The weighted multi-task loss of a forward pass.
pub fn batch_loss(act: &Activations, labels: &BatchLabels, settings: &LossSettings) -> Result<(f64, LossComponents, OutputGrads)> {
    fn head<'a>(logits: &'a Array2<f64>, l: Option<&'a [usize]>) -> Option<HeadInput<'a>> {
        l.map(|labels| HeadInput { logits: logits.view(), labels })
    }
    let bundle = multitask_loss(
        act.r.view(),
        labels.ids,
        act.id_logits.view(),
        head(&act.color_logits, labels.color),
        head(&act.type_logits, labels.vtype),
        &settings.weights,
        &settings.triplet,
        settings.xent_mode,
    )?;
    let up = OutputGrads {
        features: bundle.grads.features,
        id_logits: bundle.grads.id_logits,
        color_logits: bundle.grads.color_logits,
        type_logits: bundle.grads.type_logits,
    };
    Ok((bundle.total, bundle.components, up))
}

/// Total loss and its gradient w.r.t. every parameter.
pub fn backward(
    params: &ToyNetParams,
    act: &Activations,
    labels: &BatchLabels,
    settings: &LossSettings,
) -> Result<(f64, LossComponents, Gradients)> {
    let (total, components, up) = batch_loss(act, labels, settings)?;
    Ok((total, components, backward_from(params, act, &up, settings.mask_pose)))
}
