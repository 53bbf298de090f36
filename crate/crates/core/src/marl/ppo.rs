//! Returns, advantages and the clipped policy-gradient and value updates.

use crate::pwlnet::{EvalContext, Gradients, Mlp, Optimizer, Parameterized};
use crate::{Error, Result};

/// Lower bound applied to old-policy probabilities before dividing.
pub const PROB_FLOOR: f64 = 1e-8;

/// `G(b) = sum_{b' >= b} gamma^(b'-b) r(b')` within the segment.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (b, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[b] = acc;
    }
    out
}

/// `A(b) = G(b) - V(b)`.
pub fn advantages(rewards: &[f64], values: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::data("advantage of an empty buffer"));
    }
    if rewards.len() != values.len() {
        return Err(Error::shape(format!("{} rewards but {} values", rewards.len(), values.len())));
    }
    Ok(discounted_returns(rewards, gamma).iter().zip(values).map(|(g, v)| g - v).collect())
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `min(r A, clip(r, 1-eps, 1+eps) A)`.
pub fn clipped_objective(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Gradient of [`clipped_objective`] with respect to the logits, where
/// `ratio = p[action] / p_old`.
///
/// Zero whenever the clipped branch is strictly smaller.
pub fn clipped_logit_grad(probs: &[f64], action: usize, ratio: f64, adv: f64, eps: f64) -> Vec<f64> {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
    if clipped < unclipped {
        return vec![0.0; probs.len()];
    }
    probs
        .iter()
        .enumerate()
        .map(|(k, p)| adv * ratio * (if k == action { 1.0 } else { 0.0 } - p))
        .collect()
}

/// One descent step on `sum_b (target_b - V(x_b))^2 + lambda ||W||_1`.
///
/// Returns the loss before the step and the gradient with respect to each input.
pub fn critic_step(
    critic: &mut Mlp,
    opt: &mut Optimizer,
    inputs: &[Vec<f64>],
    targets: &[f64],
    lambda: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let (loss, grads, input_grads) = critic_loss_grad(critic, inputs, targets, lambda)?;
    critic.accumulate(&grads)?;
    opt.step(critic.params_mut())?;
    Ok((loss, input_grads))
}

/// Loss, parameter gradient and input gradients of the value regression.
pub fn critic_loss_grad(
    critic: &Mlp,
    inputs: &[Vec<f64>],
    targets: &[f64],
    lambda: f64,
) -> Result<(f64, Gradients, Vec<Vec<f64>>)> {
    if inputs.len() != targets.len() {
        return Err(Error::shape(format!("{} inputs but {} targets", inputs.len(), targets.len())));
    }
    let mut grads = Gradients::zeros_like(critic);
    let mut input_grads = Vec::with_capacity(inputs.len());
    let mut loss = lambda * critic.l1_weights();
    let mut ctx = EvalContext::new();
    for (x, &g) in inputs.iter().zip(targets) {
        let v = ctx.forward(critic, x)?[0];
        let a = g - v;
        loss += a * a;
        let back = ctx.backward(critic, &[-2.0 * a])?;
        grads.add_assign(&back.grads);
        input_grads.push(back.input_grad);
    }
    if !loss.is_finite() {
        return Err(Error::Numeric { param: "critic loss".into() });
    }
    critic.add_l1_subgradient(lambda, &mut grads);
    Ok((loss, grads, input_grads))
}

/// One ascent step on the mean clipped objective of a categorical policy.
///
/// Returns the mean objective before the step.
pub fn actor_step(
    actor: &mut Mlp,
    opt: &mut Optimizer,
    inputs: &[Vec<f64>],
    actions: &[usize],
    old_probs: &[f64],
    advs: &[f64],
    eps: f64,
) -> Result<f64> {
    let n = inputs.len();
    if actions.len() != n || old_probs.len() != n || advs.len() != n {
        return Err(Error::shape("actor batch columns differ in length"));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut grads = Gradients::zeros_like(actor);
    let mut objective = 0.0;
    let mut ctx = EvalContext::new();
    for b in 0..n {
        let logits = ctx.forward(actor, &inputs[b])?;
        let p = softmax(&logits);
        let ratio = p[actions[b]] / old_probs[b].max(PROB_FLOOR);
        objective += clipped_objective(ratio, advs[b], eps);
        // descent on the negated objective
        let dz: Vec<f64> = clipped_logit_grad(&p, actions[b], ratio, advs[b], eps)
            .into_iter()
            .map(|g| -g / n as f64)
            .collect();
        if dz.iter().any(|g| *g != 0.0) {
            grads.add_assign(&ctx.backward(actor, &dz)?.grads);
        }
    }
    let objective = objective / n as f64;
    if !objective.is_finite() {
        return Err(Error::Numeric { param: "actor objective".into() });
    }
    actor.accumulate(&grads)?;
    opt.step(actor.params_mut())?;
    Ok(objective)
}
