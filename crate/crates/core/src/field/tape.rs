//! Reverse-mode differentiation over whole-field operations.
//!
//! Each node holds the forward value of one field operation. Operands always
//! precede their consumers, so walking the node list backwards is a reverse
//! topological order. Scalars are 1×1×1 fields.
//!
//! ```
//! use stcorr::field::{Field, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Field::filled(2, 2, 1, 3.0));
//! let sq = tape.square(x);
//! let loss = tape.reduce_mean(sq, None).unwrap();
//! let grads = tape.backward(loss);
//! // d/dx mean(x²) = 2x / N
//! assert_eq!(grads.wrt(&tape, x).data(), &[1.5; 4]);
//! ```

use super::ops::{self, Axis, Order};
use super::Field;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Abs,
    Square,
    Exp,
    /// `max(x, floor)`.
    ClampMin(f64),
    /// `k * x`.
    Scale(f64),
    /// `x + k`.
    Offset(f64),
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    SumChannels(Var),
    MeanChannels(Var),
    BoxFilter(Var, usize),
    Gradient(Var, Axis, Order),
    Downsample(Var, f64),
    Upsample(Var, Vec<f64>),
    Warp {
        source: Var,
        corr: Var,
    },
    /// Stores the mask (if any) and the normalizer; a zero normalizer marks a
    /// degenerate mask whose output and gradient are both zero.
    MaskedMean(Var, Option<Field>, f64),
}

#[derive(Debug)]
struct Node {
    value: Field,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    degenerate_masks: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of masked means evaluated with an all-zero mask.
    pub fn degenerate_masks(&self) -> usize {
        self.degenerate_masks
    }

    fn push(&mut self, value: Field, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_of(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable input.
    pub fn param(&mut self, value: Field) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that receives no gradient.
    pub fn constant(&mut self, value: Field) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Field {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_scalar()
    }

    pub fn binary(&mut self, op: Binary, a: Var, b: Var) -> Result<Var> {
        let (fa, fb) = (self.value(a), self.value(b));
        fa.check_same_shape(fb, "elementwise")?;
        let value = match op {
            Binary::Add => fa.zip_map(fb, |x, y| x + y),
            Binary::Sub => fa.zip_map(fb, |x, y| x - y),
            Binary::Mul => fa.zip_map(fb, |x, y| x * y),
            Binary::Div => fa.zip_map(fb, |x, y| x / y),
        };
        let rg = self.grad_of(a) || self.grad_of(b);
        Ok(self.push(value, Op::Binary(op, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    pub fn unary(&mut self, op: Unary, a: Var) -> Var {
        let f = self.value(a);
        let value = match op {
            Unary::Abs => f.map(f64::abs),
            Unary::Square => f.map(|x| x * x),
            Unary::Exp => f.map(f64::exp),
            Unary::ClampMin(m) => f.map(|x| x.max(m)),
            Unary::Scale(k) => f.map(|x| k * x),
            Unary::Offset(k) => f.map(|x| x + k),
        };
        let rg = self.grad_of(a);
        self.push(value, Op::Unary(op, a), rg)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(Unary::Abs, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        self.unary(Unary::ClampMin(floor), a)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(Unary::Scale(k), a)
    }

    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        self.unary(Unary::Offset(k), a)
    }

    /// Sum over channels, producing a single-channel field.
    pub fn sum_channels(&mut self, a: Var) -> Var {
        let value = channel_sum(self.value(a), 1);
        let rg = self.grad_of(a);
        self.push(value, Op::SumChannels(a), rg)
    }

    pub fn mean_channels(&mut self, a: Var) -> Var {
        let f = self.value(a);
        let value = channel_sum(f, f.channels());
        let rg = self.grad_of(a);
        self.push(value, Op::MeanChannels(a), rg)
    }

    pub fn box_filter(&mut self, a: Var, radius: usize) -> Var {
        let value = ops::box_filter(self.value(a), radius);
        let rg = self.grad_of(a);
        self.push(value, Op::BoxFilter(a, radius), rg)
    }

    pub fn spatial_gradient(&mut self, a: Var, axis: Axis, order: Order) -> Var {
        let value = ops::spatial_gradient(self.value(a), axis, order);
        let rg = self.grad_of(a);
        self.push(value, Op::Gradient(a, axis, order), rg)
    }

    /// 2×2 average pooling. With `displacement` set the values are halved
    /// as well, keeping correspondence fields in pixel units.
    pub fn downsample(&mut self, a: Var, displacement: bool) -> Result<Var> {
        let f = self.value(a);
        if f.height() < 2 || f.width() < 2 {
            return Err(Error::InvalidArgument(format!(
                "downsample needs at least 2x2, got {}",
                f.shape()
            )));
        }
        let scale = if displacement { 0.5 } else { 1.0 };
        let value = ops::downsample2(f, scale);
        let rg = self.grad_of(a);
        Ok(self.push(value, Op::Downsample(a, scale), rg))
    }

    /// Align-corners bilinear resize to `height × width`; with
    /// `displacement` set, the (u, v) channels are rescaled by the size ratio.
    pub fn upsample(
        &mut self,
        a: Var,
        height: usize,
        width: usize,
        displacement: bool,
    ) -> Result<Var> {
        let f = self.value(a);
        if height < f.height() || width < f.width() {
            return Err(Error::InvalidArgument(format!(
                "upsample target {height}x{width} smaller than source {}",
                f.shape()
            )));
        }
        let scales = if displacement {
            if f.channels() != 2 {
                return Err(Error::InvalidField(
                    "displacement upsample needs a 2-channel field".into(),
                ));
            }
            ops::displacement_scales(f.height(), f.width(), height, width).to_vec()
        } else {
            Vec::new()
        };
        let value = ops::upsample_bilinear(f, height, width, &scales);
        let rg = self.grad_of(a);
        Ok(self.push(value, Op::Upsample(a, scales), rg))
    }

    /// Backward bilinear warp of `source` by the displacement field `corr`.
    pub fn warp(&mut self, source: Var, corr: Var) -> Result<Var> {
        let (fs, fc) = (self.value(source), self.value(corr));
        fs.check_same_extent(fc, "warp")?;
        if fc.channels() != 2 {
            return Err(Error::InvalidField(format!(
                "warp field must have 2 channels, got {}",
                fc.channels()
            )));
        }
        let value = ops::warp(fs, fc);
        let rg = self.grad_of(source) || self.grad_of(corr);
        Ok(self.push(value, Op::Warp { source, corr }, rg))
    }

    /// `∑(a·mask) / ∑mask`, or the plain mean without a mask. An all-zero
    /// mask yields 0 with zero gradient and bumps [`Tape::degenerate_masks`].
    pub fn reduce_mean(&mut self, a: Var, mask: Option<&Field>) -> Result<Var> {
        let f = self.value(a);
        let (value, norm) = match mask {
            None => (f.mean(), f.len() as f64),
            Some(m) => {
                f.check_same_shape(m, "reduce_mean")?;
                if m.data().iter().any(|&w| w < 0.0) {
                    return Err(Error::InvalidArgument("mask must be nonnegative".into()));
                }
                let norm = m.sum();
                if norm == 0.0 {
                    (0.0, 0.0)
                } else {
                    let s: f64 = f.data().iter().zip(m.data()).map(|(x, w)| x * w).sum();
                    (s / norm, norm)
                }
            }
        };
        if norm == 0.0 {
            self.degenerate_masks += 1;
        }
        let rg = self.grad_of(a) && norm != 0.0;
        Ok(self.push(
            Field::scalar(value),
            Op::MaskedMean(a, mask.cloned(), norm),
            rg,
        ))
    }

    /// Sum of scalar vars, left to right.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Var> {
        let mut iter = vars.iter();
        let mut acc = match iter.next() {
            Some(&v) => v,
            None => self.constant(Field::scalar(0.0)),
        };
        for &v in iter {
            acc = self.add(acc, v)?;
        }
        Ok(acc)
    }

    /// Gradients of the scalar `loss` with respect to every node that
    /// depends on a parameter.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Field>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        let out = &self.nodes[loss.0].value;
        grads[loss.0] = Some(Field::filled(
            out.height(),
            out.width(),
            out.channels(),
            1.0,
        ));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let mut out: Vec<(Var, Field)> = Vec::with_capacity(2);
            let mut send = |v: Var, contribution: Field| out.push((v, contribution));
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Binary(op, a, b) => {
                    let (fa, fb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    match op {
                        Binary::Add => {
                            send(*a, g.clone());
                            send(*b, g);
                        }
                        Binary::Sub => {
                            send(*a, g.clone());
                            send(*b, g.map(|x| -x));
                        }
                        Binary::Mul => {
                            send(*a, g.zip_map(fb, |x, y| x * y));
                            send(*b, g.zip_map(fa, |x, y| x * y));
                        }
                        Binary::Div => {
                            send(*a, g.zip_map(fb, |x, y| x / y));
                            let q = node.value.zip_map(fb, |o, y| -o / y);
                            send(*b, g.zip_map(&q, |x, y| x * y));
                        }
                    }
                }
                Op::Unary(op, a) => {
                    let fa = &self.nodes[a.0].value;
                    let d = match *op {
                        Unary::Abs => g.zip_map(fa, |x, y| {
                            if y > 0.0 {
                                x
                            } else if y < 0.0 {
                                -x
                            } else {
                                0.0
                            }
                        }),
                        Unary::Square => g.zip_map(fa, |x, y| 2.0 * y * x),
                        Unary::Exp => g.zip_map(&node.value, |x, o| x * o),
                        Unary::ClampMin(m) => g.zip_map(fa, |x, y| if y > m { x } else { 0.0 }),
                        Unary::Scale(k) => g.map(|x| k * x),
                        Unary::Offset(_) => g,
                    };
                    send(*a, d);
                }
                Op::SumChannels(a) | Op::MeanChannels(a) => {
                    let fa = &self.nodes[a.0].value;
                    let k = if matches!(node.op, Op::MeanChannels(_)) {
                        fa.channels() as f64
                    } else {
                        1.0
                    };
                    let gd = g.data();
                    let d = Field::from_fn(fa.height(), fa.width(), fa.channels(), |_, y, x| {
                        gd[y * fa.width() + x] / k
                    });
                    send(*a, d);
                }
                Op::BoxFilter(a, r) => send(*a, ops::box_filter_adjoint(&g, *r)),
                Op::Gradient(a, axis, order) => {
                    send(*a, ops::spatial_gradient_adjoint(&g, *axis, *order))
                }
                Op::Downsample(a, scale) => {
                    let fa = &self.nodes[a.0].value;
                    send(
                        *a,
                        ops::downsample2_adjoint(&g, fa.height(), fa.width(), *scale),
                    );
                }
                Op::Upsample(a, scales) => {
                    let fa = &self.nodes[a.0].value;
                    send(
                        *a,
                        ops::upsample_bilinear_adjoint(&g, fa.height(), fa.width(), scales),
                    );
                }
                Op::Warp { source, corr } => {
                    let (gs, gc) = ops::warp_backward(
                        &self.nodes[source.0].value,
                        &self.nodes[corr.0].value,
                        &g,
                    );
                    send(*source, gs);
                    send(*corr, gc);
                }
                Op::MaskedMean(a, mask, norm) => {
                    let fa = &self.nodes[a.0].value;
                    let gv = g.as_scalar() / norm;
                    let d = match mask {
                        Some(m) => m.map(|w| w * gv),
                        None => Field::filled(fa.height(), fa.width(), fa.channels(), gv),
                    };
                    send(*a, d);
                }
            }
            for (v, contribution) in out {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        Gradients { grads }
    }
}

/// Channel sum divided by `divisor`.
fn channel_sum(f: &Field, divisor: usize) -> Field {
    let n = f.pixels();
    let mut data = vec![0.0; n];
    for c in 0..f.channels() {
        for (acc, v) in data.iter_mut().zip(f.channel(c)) {
            *acc += v;
        }
    }
    if divisor != 1 {
        let k = divisor as f64;
        data.iter_mut().for_each(|v| *v /= k);
    }
    Field::from_vec(f.height(), f.width(), 1, data).expect("channel sum shape")
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Field>>,
}

impl Gradients {
    /// Gradient with respect to `v`, if `v` depends on a parameter and
    /// influences the loss.
    pub fn get(&self, v: Var) -> Option<&Field> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `v`, zeros when it received none.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Field {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let f = tape.value(v);
                Field::zeros(f.height(), f.width(), f.channels())
            }
        }
    }
}
