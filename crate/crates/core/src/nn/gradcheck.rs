//! Central finite-difference gradient checking.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::Result;

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(parameter index, element index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub checked: usize,
}

fn evaluate<F>(params: &[Tensor], build: &F) -> Result<(Graph, Vec<Var>, Var)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = build(&mut g, &vars)?;
    Ok((g, vars, loss))
}

/// Compares reverse-mode gradients of the scalar built by `build` against
/// central differences with step `eps`. `build` must be deterministic
/// (reseed any RNG and recreate any mutable state on each call).
/// `coords` restricts the comparison; `None` checks every element.
pub fn check_gradients<F>(params: &[Tensor], build: F, eps: f64, coords: Option<&[(usize, usize)]>) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let (mut g, vars, loss) = evaluate(params, &build)?;
    g.backward(loss)?;
    let all: Vec<(usize, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = params
                .iter()
                .enumerate()
                .flat_map(|(p, t)| (0..t.len()).map(move |i| (p, i)))
                .collect();
            &all
        }
    };
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    let mut probe = params.to_vec();
    for &(p, i) in coords {
        let analytic = g.grad(vars[p]).map_or(0.0, |d| d[i]);
        let orig = probe[p].data()[i];
        probe[p].data_mut()[i] = orig + eps;
        let (gp, _, lp) = evaluate(&probe, &build)?;
        probe[p].data_mut()[i] = orig - eps;
        let (gm, _, lm) = evaluate(&probe, &build)?;
        probe[p].data_mut()[i] = orig;
        let numeric = (gp.value(lp).item() - gm.value(lm).item()) / (2.0 * eps);
        let err = relative_error(analytic, numeric);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = (p, i);
        }
        report.checked += 1;
    }
    Ok(report)
}
