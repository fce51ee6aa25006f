//! Tiny grammar for tensor arguments on the command line:
//!   `g`            the metric
//!   `-g`           the negated metric
//!   `dt⊗dt`        products of coordinate differentials (`*` also works),
//!                  optionally with a leading `-`
//! Each `d<coord>` names a coordinate of the spacetime.

use causalsym::exprs::Expr;
use causalsym::geometry::SpacetimeModel;
use causalsym::tensor::{Symmetry, TensorField};

pub fn parse(spec: &str, model: &SpacetimeModel) -> Result<TensorField, String> {
    let trimmed = spec.trim();
    let (negate, body) = match trimmed.strip_prefix('-') {
        Some(rest) => (true, rest.trim()),
        None => (false, trimmed),
    };
    if body == "g" {
        let n = model.dim;
        let mut comps = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let e = model.metric[i][j].clone();
                comps.push(if negate { causalsym::exprs::neg(e) } else { e });
            }
        }
        return Ok(TensorField {
            rank: 2,
            dim: n,
            comps,
            symmetry: Symmetry::Symmetric,
        });
    }

    let factors: Vec<&str> = body
        .split(['⊗', '*'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if factors.is_empty() {
        return Err(format!("empty tensor spec `{spec}`"));
    }
    let mut slots = Vec::with_capacity(factors.len());
    for f in &factors {
        let name = f
            .strip_prefix('d')
            .ok_or_else(|| format!("expected d<coord>, got `{f}`"))?;
        let idx = model
            .coords
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| format!("unknown coordinate `{name}` in `{f}`"))?;
        slots.push(idx);
    }
    let n = model.dim;
    let r = slots.len();
    let mut comps = vec![Expr::Const(0.0); n.pow(r as u32)];
    let mut flat = 0usize;
    for &s in &slots {
        flat = flat * n + s;
    }
    comps[flat] = Expr::Const(if negate { -1.0 } else { 1.0 });
    // a pure differential product is symmetric only in the repeated-index
    // sense; declare no symmetry so validation stays honest
    Ok(TensorField {
        rank: r,
        dim: n,
        comps,
        symmetry: Symmetry::None,
    })
}
