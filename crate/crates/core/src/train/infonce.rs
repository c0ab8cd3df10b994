//! Contrastive objective for the `dpu-cl` ablation.
//!
//! Each node is an anchor; its positive is the same node encoded from a dropped-out view and
//! the single negative is the mean anchor embedding over every node of every domain. With
//! cosine similarities `s⁺`, `s⁻` the per-anchor loss is
//! `−log(e^{s⁺/τ} / (e^{s⁺/τ} + e^{s⁻/τ})) = softplus((s⁻ − s⁺)/τ)`.

use crate::autodiff::{Tape, Var};
use crate::error::{LedaError, Result};
use crate::Matrix;

/// Added under the square root of cosine denominators.
const NORM_EPS: f64 = 1e-12;

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(LedaError::InvalidArgument(format!("InfoNCE temperature must be positive, got {tau}")))
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Mean per-anchor loss from precomputed similarities.
pub fn infonce_from_similarities(s_pos: &[f64], s_neg: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if s_pos.len() != s_neg.len() || s_pos.is_empty() {
        return Err(LedaError::InvalidArgument(format!(
            "need matching non-empty similarity lists, got {} and {}",
            s_pos.len(),
            s_neg.len()
        )));
    }
    let total: f64 = s_pos.iter().zip(s_neg).map(|(p, n)| softplus((n - p) / tau)).sum();
    Ok(total / s_pos.len() as f64)
}

/// Row-wise cosine similarity of two equally shaped matrices.
pub fn cosine_rows(a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    if a.shape() != b.shape() {
        return Err(LedaError::InvalidArgument(format!(
            "cosine of {:?} and {:?} rows",
            a.shape(),
            b.shape()
        )));
    }
    Ok((0..a.rows())
        .map(|r| {
            let (x, y) = (a.row(r), b.row(r));
            let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            let nx: f64 = x.iter().map(|v| v * v).sum();
            let ny: f64 = y.iter().map(|v| v * v).sum();
            dot / (nx * ny + NORM_EPS).sqrt()
        })
        .collect())
}

/// Loss over `(anchor, positive)` embedding pairs, one pair per domain.
pub fn infonce_loss(pairs: &[(&Matrix, &Matrix)], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if pairs.is_empty() {
        return Err(LedaError::InvalidArgument("InfoNCE needs at least one domain".into()));
    }
    let anchors: Vec<&Matrix> = pairs.iter().map(|p| p.0).collect();
    let negative = Matrix::vstack(&anchors)?.column_means();
    let mut s_pos = Vec::new();
    let mut s_neg = Vec::new();
    for (anchor, positive) in pairs {
        s_pos.extend(cosine_rows(anchor, positive)?);
        let neg = Matrix::from_vec(
            anchor.rows(),
            anchor.cols(),
            negative.values().repeat(anchor.rows()),
        )?;
        s_neg.extend(cosine_rows(anchor, &neg)?);
    }
    infonce_from_similarities(&s_pos, &s_neg, tau)
}

fn cosine_on_tape(tape: &mut Tape<f64>, a: Var, b: Var) -> Result<Var> {
    let prod = tape.mul(a, b)?;
    let dot = tape.row_sum(prod);
    let a2 = tape.square(a);
    let na = tape.row_sum(a2);
    let b2 = tape.square(b);
    let nb = tape.row_sum(b2);
    let nn = tape.mul(na, nb)?;
    let nn = tape.offset(nn, NORM_EPS);
    let denom = tape.sqrt(nn);
    tape.div(dot, denom)
}

/// [`infonce_loss`] recorded on a tape; gradients reach the negative through the mean.
pub fn infonce_on_tape(tape: &mut Tape<f64>, pairs: &[(Var, Var)], tau: f64) -> Result<Var> {
    check_tau(tau)?;
    if pairs.is_empty() {
        return Err(LedaError::InvalidArgument("InfoNCE needs at least one domain".into()));
    }
    let total_nodes: usize = pairs.iter().map(|&(a, _)| tape.value(a).rows()).sum();
    let mut col_total: Option<Var> = None;
    for &(anchor, _) in pairs {
        let cs = tape.col_sum(anchor);
        col_total = Some(match col_total {
            Some(t) => tape.add(t, cs)?,
            None => cs,
        });
    }
    let negative = tape.scale(col_total.expect("non-empty"), 1.0 / total_nodes as f64);

    let mut sum: Option<Var> = None;
    for &(anchor, positive) in pairs {
        let n = tape.value(anchor).rows();
        let neg = tape.broadcast_rows(negative, n)?;
        let s_pos = cosine_on_tape(tape, anchor, positive)?;
        let s_neg = cosine_on_tape(tape, anchor, neg)?;
        let gap = tape.sub(s_neg, s_pos)?;
        let gap = tape.scale(gap, 1.0 / tau);
        let per_anchor = tape.softplus(gap);
        let part = tape.reduce_sum(per_anchor);
        sum = Some(match sum {
            Some(t) => tape.add(t, part)?,
            None => part,
        });
    }
    Ok(tape.scale(sum.expect("non-empty"), 1.0 / total_nodes as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_similarities_give_log_two() {
        let v = infonce_from_similarities(&[0.3, -0.2], &[0.3, -0.2], 1.0).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturated_similarities_vanish() {
        let v = infonce_from_similarities(&[1.0], &[-1.0], 0.1).unwrap();
        assert!(v < 1e-6);
    }

    #[test]
    fn temperature_must_be_positive() {
        assert!(infonce_from_similarities(&[1.0], &[0.0], 0.0).is_err());
        let a = Matrix::identity(2);
        assert!(infonce_loss(&[(&a, &a)], -1.0).is_err());
    }

    #[test]
    fn tape_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a1 = Matrix::random_normal(4, 3, &mut rng);
        let p1 = Matrix::random_normal(4, 3, &mut rng);
        let a2 = Matrix::random_normal(6, 3, &mut rng);
        let p2 = Matrix::random_normal(6, 3, &mut rng);
        let plain = infonce_loss(&[(&a1, &p1), (&a2, &p2)], 0.5).unwrap();
        let mut tape = Tape::new();
        let vars: Vec<(Var, Var)> = [(&a1, &p1), (&a2, &p2)]
            .iter()
            .map(|(a, p)| (tape.constant((*a).clone()), tape.constant((*p).clone())))
            .collect();
        let loss = infonce_on_tape(&mut tape, &vars, 0.5).unwrap();
        assert!((tape.scalar(loss).unwrap() - plain).abs() < 1e-12);
    }
}
