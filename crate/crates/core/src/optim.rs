//! First-order optimizers over a [`ParamStore`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Element;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Momentum { lr: f64, mu: f64 },
    Adadelta { rho: f64, eps: f64 },
    Adam { alpha: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const ADADELTA: OptimizerKind = OptimizerKind::Adadelta { rho: 0.985, eps: 1e-10 };
    pub const ADAM: OptimizerKind = OptimizerKind::Adam {
        alpha: 1e-3,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd { .. } => "sgd",
            OptimizerKind::Momentum { .. } => "momentum",
            OptimizerKind::Adadelta { .. } => "adadelta",
            OptimizerKind::Adam { .. } => "adam",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::contract(format!("{} hyperparameter out of range: {what}", self.name())));
        match *self {
            OptimizerKind::Sgd { lr } if !(lr > 0.0 && lr.is_finite()) => bad("lr > 0"),
            OptimizerKind::Momentum { lr, mu } if !(lr > 0.0 && lr.is_finite() && (0.0..1.0).contains(&mu)) => {
                bad("lr > 0, mu in [0, 1)")
            }
            OptimizerKind::Adadelta { rho, eps } if !(rho > 0.0 && rho < 1.0 && eps > 0.0) => bad("rho in (0, 1), eps > 0"),
            OptimizerKind::Adam { alpha, beta1, beta2, eps }
                if !(alpha > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) =>
            {
                bad("alpha > 0, beta1 and beta2 in [0, 1), eps > 0")
            }
            _ => Ok(()),
        }
    }

    /// Names of the per-parameter accumulators this optimizer keeps.
    pub fn accumulators(&self) -> &'static [&'static str] {
        match self {
            OptimizerKind::Sgd { .. } => &[],
            OptimizerKind::Momentum { .. } => &["velocity"],
            OptimizerKind::Adadelta { .. } => &["sq_grad", "sq_update"],
            OptimizerKind::Adam { .. } => &["m", "v"],
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            OptimizerKind::Sgd { lr } => write!(f, "sgd(lr={lr})"),
            OptimizerKind::Momentum { lr, mu } => write!(f, "momentum(lr={lr}, mu={mu})"),
            OptimizerKind::Adadelta { rho, eps } => write!(f, "adadelta(rho={rho}, eps={eps})"),
            OptimizerKind::Adam { alpha, beta1, beta2, eps } => {
                write!(f, "adam(alpha={alpha}, beta1={beta1}, beta2={beta2}, eps={eps})")
            }
        }
    }
}

fn check_len(w: usize, g: usize) -> Result<()> {
    if w != g {
        return Err(Error::dim("gradient length", w, g));
    }
    Ok(())
}

/// `w ← w − lr·g`
pub fn sgd_step<T: Element>(w: &mut [T], g: &[T], lr: f64) -> Result<()> {
    check_len(w.len(), g.len())?;
    let lr = T::from_f64(lr);
    for (w, &g) in w.iter_mut().zip(g) {
        *w -= lr * g;
    }
    Ok(())
}

/// `v ← μ·v + g; w ← w − lr·v`
pub fn momentum_step<T: Element>(w: &mut [T], g: &[T], lr: f64, mu: f64, velocity: &mut [T]) -> Result<()> {
    check_len(w.len(), g.len())?;
    check_len(w.len(), velocity.len())?;
    let (lr, mu) = (T::from_f64(lr), T::from_f64(mu));
    for ((w, &g), v) in w.iter_mut().zip(g).zip(velocity) {
        *v = mu * *v + g;
        *w -= lr * *v;
    }
    Ok(())
}

/// Adadelta with running averages of squared gradients and squared updates.
pub fn adadelta_step<T: Element>(
    w: &mut [T],
    g: &[T],
    rho: f64,
    eps: f64,
    sq_grad: &mut [T],
    sq_update: &mut [T],
) -> Result<()> {
    OptimizerKind::Adadelta { rho, eps }.validate()?;
    check_len(w.len(), g.len())?;
    check_len(w.len(), sq_grad.len())?;
    check_len(w.len(), sq_update.len())?;
    let (one_minus, rho, eps) = (T::from_f64(1.0 - rho), T::from_f64(rho), T::from_f64(eps));
    for (((w, &g), eg), ex) in w.iter_mut().zip(g).zip(sq_grad).zip(sq_update) {
        *eg = rho * *eg + one_minus * g * g;
        let dx = T::ZERO - ((*ex + eps) / (*eg + eps)).sqrt() * g;
        *ex = rho * *ex + one_minus * dx * dx;
        *w += dx;
    }
    Ok(())
}

/// Adam with bias-corrected moments; `t` is the 1-based step number.
#[allow(clippy::too_many_arguments)]
pub fn adam_step<T: Element>(
    w: &mut [T],
    g: &[T],
    alpha: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: &mut [T],
    v: &mut [T],
    t: u64,
) -> Result<()> {
    OptimizerKind::Adam { alpha, beta1, beta2, eps }.validate()?;
    if t == 0 {
        return Err(Error::contract("adam step counter starts at 1"));
    }
    check_len(w.len(), g.len())?;
    check_len(w.len(), m.len())?;
    check_len(w.len(), v.len())?;
    let bc1 = T::from_f64(1.0 - beta1.powf(t as f64));
    let bc2 = T::from_f64(1.0 - beta2.powf(t as f64));
    let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
    let (c1, c2) = (T::from_f64(1.0 - beta1), T::from_f64(1.0 - beta2));
    let (alpha, eps) = (T::from_f64(alpha), T::from_f64(eps));
    for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m).zip(v) {
        *m = b1 * *m + c1 * g;
        *v = b2 * *v + c2 * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= alpha * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Optimizer state for every parameter of a store.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer<T: Element = f32> {
    kind: OptimizerKind,
    /// `slots[param][accumulator]`
    slots: Vec<Vec<Vec<T>>>,
    steps: u64,
}

impl<T: Element> Optimizer<T> {
    pub fn new(kind: OptimizerKind, store: &ParamStore<T>) -> Result<Self> {
        kind.validate()?;
        let n = kind.accumulators().len();
        let slots = store
            .iter()
            .map(|(_, p)| vec![vec![T::ZERO; p.tensor.numel()]; n])
            .collect();
        Ok(Self { kind, slots, steps: 0 })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the accumulated gradients, then clears them.
    /// A parameter without a gradient is treated as having a zero gradient.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if store.len() != self.slots.len() {
            return Err(Error::dim("optimizer parameter count", self.slots.len(), store.len()));
        }
        self.steps += 1;
        let t = self.steps;
        let mut zeros = Vec::new();
        for (p, slot) in store.iter_mut().zip(&mut self.slots) {
            let tensor = &mut p.tensor;
            let (w, grad) = tensor.data_and_grad();
            let grad = match grad {
                Some(g) => g,
                None => {
                    zeros.resize(w.len(), T::ZERO);
                    &zeros[..]
                }
            };
            match (self.kind, slot.as_mut_slice()) {
                (OptimizerKind::Sgd { lr }, _) => sgd_step(w, grad, lr)?,
                (OptimizerKind::Momentum { lr, mu }, [v]) => momentum_step(w, grad, lr, mu, v)?,
                (OptimizerKind::Adadelta { rho, eps }, [eg, ex]) => adadelta_step(w, grad, rho, eps, eg, ex)?,
                (OptimizerKind::Adam { alpha, beta1, beta2, eps }, [m, v]) => {
                    adam_step(w, grad, alpha, beta1, beta2, eps, m, v, t)?
                }
                _ => unreachable!("slot count fixed at construction"),
            }
            tensor.zero_grad();
        }
        Ok(())
    }

    /// Accumulator buffers as `(param index, accumulator name, data)`.
    pub fn state(&self) -> impl Iterator<Item = (usize, &'static str, &[T])> {
        let names = self.kind.accumulators();
        self.slots
            .iter()
            .enumerate()
            .flat_map(move |(i, s)| s.iter().zip(names).map(move |(d, &n)| (i, n, d.as_slice())))
    }

    /// Rebuilds an optimizer from saved accumulators and step counter.
    pub fn restore(kind: OptimizerKind, steps: u64, store: &ParamStore<T>, buffers: Vec<Vec<Vec<T>>>) -> Result<Self> {
        let mut opt = Self::new(kind, store)?;
        if buffers.len() != opt.slots.len() {
            return Err(Error::incompatible("optimizer parameter count", opt.slots.len(), buffers.len()));
        }
        for (i, (have, want)) in buffers.iter().zip(&opt.slots).enumerate() {
            if have.len() != want.len() || have.iter().zip(want).any(|(a, b)| a.len() != b.len()) {
                return Err(Error::incompatible(
                    format!("optimizer state for {}", store.name(crate::autodiff::ParamId(i))),
                    "matching accumulator shapes",
                    "different shapes",
                ));
            }
        }
        opt.slots = buffers;
        opt.steps = steps;
        Ok(opt)
    }
}
