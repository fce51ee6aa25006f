//! Built-in model fixtures: Minkowski space, the radiating (Vaidya-type)
//! metric with a chosen mass function, and a conformally scaled slice
//! product. Each fixture bundles the model with its natural flow, generator
//! and a safe sampling box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exprs::{Bindings, Expr, ExprError};
use crate::flows::FlowFamily;
use crate::generators::VectorFieldDef;
use crate::geometry::{PointValue, SpacetimeModel};
use crate::relations::DiffeoMap;

#[derive(Debug, Error)]
pub enum SpacetimeError {
    #[error("unknown builtin spacetime `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("dimension {0} out of range (need 2..=5)")]
    BadDimension(usize),
}

/// A model plus its companion structures used throughout the test-beds.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub model: SpacetimeModel,
    pub flow: Option<FlowFamily>,
    pub generator: Option<VectorFieldDef>,
    /// Per-coordinate sampling interval, away from coordinate degeneracies.
    pub sample_box: Vec<(f64, f64)>,
}

fn parse_metric(rows: &[Vec<&str>]) -> Result<Vec<Vec<Expr>>, ExprError> {
    rows.iter()
        .map(|r| r.iter().map(|s| Expr::parse(s)).collect())
        .collect()
}

fn const_orientation(dim: usize, index: usize) -> Vec<Expr> {
    (0..dim)
        .map(|i| Expr::Const(if i == index { 1.0 } else { 0.0 }))
        .collect()
}

fn shift_flow(coords: &[String], shifted: usize) -> FlowFamily {
    let exprs = coords
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i == shifted {
                Expr::parse(&format!("{} + s", c)).unwrap()
            } else {
                Expr::Var(c.clone())
            }
        })
        .collect();
    FlowFamily {
        map: DiffeoMap::new(exprs, coords),
        param: "s".into(),
        interval: (-5.0, 5.0),
        group: true,
    }
}

fn unit_generator(dim: usize, index: usize) -> VectorFieldDef {
    VectorFieldDef {
        comps: (0..dim)
            .map(|i| Expr::Const(if i == index { 1.0 } else { 0.0 }))
            .collect(),
    }
}

/// Flat space of dimension 2..=5 with signature (+,-,...,-); coordinates
/// t, x, y, z, w as far as the dimension reaches. Flow: time translation.
pub fn minkowski(n: usize) -> Result<Fixture, SpacetimeError> {
    if !(2..=5).contains(&n) {
        return Err(SpacetimeError::BadDimension(n));
    }
    let names = ["t", "x", "y", "z", "w"];
    let coords: Vec<String> = names[..n].iter().map(|s| s.to_string()).collect();
    let metric = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    Expr::Const(if i != j {
                        0.0
                    } else if i == 0 {
                        1.0
                    } else {
                        -1.0
                    })
                })
                .collect()
        })
        .collect();
    let model = SpacetimeModel {
        name: format!("minkowski{}", n),
        dim: n,
        coords: coords.clone(),
        metric,
        orientation: const_orientation(n, 0),
        defaults: Bindings::new(),
    };
    Ok(Fixture {
        flow: Some(shift_flow(&coords, 0)),
        generator: Some(unit_generator(n, 0)),
        model,
        sample_box: vec![(-1.0, 1.0); n],
    })
}

/// The radiating metric ds2 = (1 - 2M(t)/r) dt2 - 2 dt dr - r2 dOmega2 with
/// mass function `m_expr` in the coordinate t. Orientation: the null vector
/// d_r. Flow: t -> t + s; generator d_t.
pub fn vaidya(m_expr: &str) -> Result<Fixture, SpacetimeError> {
    let m = Expr::parse(m_expr)?;
    let coords: Vec<String> = ["t", "r", "theta", "phi"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let g_tt = format!("1 - 2*({})/r", m.to_string());
    let metric = parse_metric(&[
        vec![&g_tt, "-1", "0", "0"],
        vec!["-1", "0", "0", "0"],
        vec!["0", "0", "0 - r^2", "0"],
        vec!["0", "0", "0", "0 - r^2*sin(theta)^2"],
    ])?;
    let model = SpacetimeModel {
        name: "vaidya".into(),
        dim: 4,
        coords: coords.clone(),
        metric,
        orientation: const_orientation(4, 1),
        defaults: Bindings::new(),
    };
    Ok(Fixture {
        flow: Some(shift_flow(&coords, 0)),
        generator: Some(unit_generator(4, 0)),
        model,
        sample_box: vec![
            (0.0, 2.0),
            (3.0, 10.0),
            (0.3, std::f64::consts::PI - 0.3),
            (0.0, std::f64::consts::TAU - 1e-6),
        ],
    })
}

/// ds2 = F(x3)^2 (inner Minkowski in x0..x2) - dx3^2 with conformal factor
/// `f_expr` in x3. Flow: x3 -> x3 + s; generator d_{x3}.
pub fn conformal_slice(f_expr: &str) -> Result<Fixture, SpacetimeError> {
    let f = Expr::parse(f_expr)?;
    let coords: Vec<String> = (0..4).map(|i| format!("x{}", i)).collect();
    let f2 = format!("({})^2", f.to_string());
    let neg_f2 = format!("0 - ({})^2", f.to_string());
    let metric = parse_metric(&[
        vec![&f2, "0", "0", "0"],
        vec!["0", &neg_f2, "0", "0"],
        vec!["0", "0", &neg_f2, "0"],
        vec!["0", "0", "0", "-1"],
    ])?;
    let model = SpacetimeModel {
        name: "conformal_slice".into(),
        dim: 4,
        coords: coords.clone(),
        metric,
        orientation: const_orientation(4, 0),
        defaults: Bindings::new(),
    };
    Ok(Fixture {
        flow: Some(shift_flow(&coords, 3)),
        generator: Some(unit_generator(4, 3)),
        model,
        sample_box: vec![(-1.0, 1.0); 4],
    })
}

/// Dispatch by name: `minkowski2`..`minkowski5`, `vaidya` (decreasing mass
/// exp(-t) unless overridden via config files), `conformal_slice` (F = exp).
pub fn builtin(name: &str, _params: &Bindings) -> Result<Fixture, SpacetimeError> {
    if let Some(rest) = name.strip_prefix("minkowski") {
        let n: usize = rest.parse().map_err(|_| SpacetimeError::Unknown(name.into()))?;
        return minkowski(n);
    }
    match name {
        "vaidya" => vaidya("exp(0 - t)"),
        "conformal_slice" => conformal_slice("exp(x3)"),
        other => Err(SpacetimeError::Unknown(other.into())),
    }
}

/// Deterministic quasi-uniform sample of the fixture's box.
pub fn sample_points(fx: &Fixture, count: usize, seed: u64) -> Vec<PointValue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let coords = fx
                .sample_box
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..hi))
                .collect();
            PointValue::new(coords)
        })
        .collect()
}
