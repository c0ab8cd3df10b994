use crate::autodiff::{Bindings, ParamSet, Tape, Var};
use crate::error::{LedaError, Result};
use crate::scalar::Scalar;

/// Largest relative disagreement between analytic gradients and central differences.
///
/// For every entry of every parameter the error is
/// `|analytic − fd| / max(1, |fd|)` with `fd = (L(θ+ε) − L(θ−ε)) / 2ε`. The loss closure
/// must be deterministic (freeze any sampling noise before calling).
pub fn gradient_check<T, F>(params: &ParamSet<T>, eps: T, loss_fn: F) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &Bindings) -> Result<Var>,
{
    if params.is_empty() {
        return Ok(T::zero());
    }
    let mut tape = Tape::new();
    let bindings = params.bind(&mut tape);
    let loss = loss_fn(&mut tape, &bindings)?;
    finite_loss(tape.scalar(loss)?)?;
    tape.backward(loss)?;

    let evaluate = |perturbed: &ParamSet<T>| -> Result<T> {
        let mut tape = Tape::new();
        let bindings = perturbed.bind(&mut tape);
        let loss = loss_fn(&mut tape, &bindings)?;
        finite_loss(tape.scalar(loss)?)
    };

    let mut worst = T::zero();
    let mut probe = params.clone();
    for (name, var) in bindings.iter() {
        let analytic = tape.grad(var);
        for i in 0..analytic.values().len() {
            let original = params.value(name)?.values()[i];
            probe.get_mut(name).unwrap().value.values_mut()[i] = original + eps;
            let plus = evaluate(&probe)?;
            probe.get_mut(name).unwrap().value.values_mut()[i] = original - eps;
            let minus = evaluate(&probe)?;
            probe.get_mut(name).unwrap().value.values_mut()[i] = original;

            let fd = (plus - minus) / (eps + eps);
            let err = (analytic.values()[i] - fd).abs() / fd.abs().max(T::one());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn finite_loss<T: Scalar>(value: T) -> Result<T> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(LedaError::NonFinite(format!("loss evaluated to {value}")))
    }
}
